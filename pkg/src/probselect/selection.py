"""Efficiency thresholds, compliance probabilities and the two selection policies."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .model import (
    DeviceProfile,
    Workload,
    data_movement_overhead,
    download_latency,
    peak_flops,
    upload_latency,
)

_SQRT2 = math.sqrt(2.0)


@dataclass(frozen=True)
class SloPolicy:
    deadline: float  # seconds
    probability_threshold: float

    def __post_init__(self):
        if not self.deadline > 0:
            raise ValueError(f"deadline must be > 0, got {self.deadline!r}")
        if not 0 <= self.probability_threshold <= 1:
            raise ValueError(f"probability_threshold must lie in [0, 1], got {self.probability_threshold!r}")


@dataclass(frozen=True)
class EfficiencyDistribution:
    """Normal belief about the fraction of peak FLOPS a device achieves."""

    mean: float = 0.5
    std_dev: float = 0.25

    def __post_init__(self):
        if not 0 < self.mean <= 1:
            raise ValueError(f"mean must lie in (0, 1], got {self.mean!r}")
        if not self.std_dev > 0:
            raise ValueError(f"std_dev must be > 0, got {self.std_dev!r}")


@dataclass(frozen=True)
class SelectionDecision:
    device_id: str
    efficiency_threshold: Optional[float]  # None when the policy does not compute it
    compliance_probability: float
    selected: bool


def available_compute_time(slo: SloPolicy, profile: DeviceProfile, workload: Workload) -> float:
    """Deadline minus network time; negative when the links alone overrun it."""
    if not profile.has_bandwidths:
        raise ValueError(f"{profile.device_id}: bandwidths have not been assigned")
    network = (download_latency(workload.model_size, profile.download_bandwidth)
               + upload_latency(workload.model_size, profile.upload_bandwidth))
    return slo.deadline - network


def net_compute_time(tau_prime: float, profile: DeviceProfile, workload: Workload) -> float:
    return tau_prime - data_movement_overhead(profile, workload)


def efficiency_threshold(profile: DeviceProfile, workload: Workload, slo: SloPolicy) -> float:
    """Smallest efficiency at which the device finishes exactly on the deadline.

    Returns ``inf`` when no time is left for GPU work at all.
    """
    net = net_compute_time(available_compute_time(slo, profile, workload), profile, workload)
    if net <= 0:
        return math.inf
    work = workload.epoch_factor * profile.dataset_size * workload.flops_per_sample
    return work / (peak_flops(profile.gpu) * net)


def std_normal_cdf(x: float) -> float:
    return 0.5 * math.erfc(-x / _SQRT2)


def compliance_probability(eta_th: float, dist: EfficiencyDistribution) -> float:
    """P(eta >= eta_th) for eta ~ N(mean, std_dev**2)."""
    if math.isinf(eta_th):
        return 0.0
    # Upper tail via erfc directly, which keeps precision far from the mean.
    return std_normal_cdf((dist.mean - eta_th) / dist.std_dev)


def probselect(candidates: Sequence[DeviceProfile], workload: Workload, slo: SloPolicy,
               dist: EfficiencyDistribution) -> list[SelectionDecision]:
    """Score every candidate and keep those with ``p >= p_slo``.

    A device left with no compute time at all (infinite threshold) is never
    kept, even at ``p_slo == 0``.
    """
    decisions = []
    for profile in candidates:
        eta_th = efficiency_threshold(profile, workload, slo)
        p = compliance_probability(eta_th, dist)
        keep = not math.isinf(eta_th) and p >= slo.probability_threshold
        decisions.append(SelectionDecision(profile.device_id, eta_th, p, keep))
    return decisions


def fedlim_select(candidates: Sequence[DeviceProfile], rng: np.random.Generator,
                  fraction: float = 1.0) -> list[SelectionDecision]:
    """Deadline-unaware random participation.

    Each candidate is kept independently with probability ``fraction``; the
    default keeps every candidate.  The deadline only matters later, when
    late updates are discarded.  Decisions stay in candidate order.
    """
    if not 0 <= fraction <= 1:
        raise ValueError(f"fraction must lie in [0, 1], got {fraction!r}")
    if fraction == 1.0:
        keep = np.ones(len(candidates), dtype=bool)
    else:
        keep = rng.random(len(candidates)) < fraction
    return [SelectionDecision(p.device_id, None, 1.0, bool(k)) for p, k in zip(candidates, keep)]
