"""Round-by-round fleet simulation comparing ProbSelect with the FedLim baseline.

Seeding
-------
Every random draw descends from one master seed through
``numpy.random.SeedSequence`` spawn keys, so results never depend on the
order in which rounds are evaluated:

* ``(0xF1EE7,)`` -- fleet GPU shuffle (see :func:`fleet.generate_fleet`)
* ``(r, 0)`` -- round ``r`` candidate draw and bandwidths
* ``(r, 1)`` -- round ``r`` true efficiency and jitter, one pair per candidate
* ``(r, 2, i)`` -- round ``r`` policy-private stream, ``i`` = index in ``POLICIES``

Streams 0 and 1 are shared by both policies, so in matched rounds they see
the same candidates, the same links and the same realised efficiencies.
"""

from __future__ import annotations

import csv
import io
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

from .fleet import FleetConfig, generate_fleet, sample_bandwidths, sample_candidates
from .model import DeviceProfile, Workload, compute_seconds, total_latency
from .selection import EfficiencyDistribution, SloPolicy, fedlim_select, probselect

POLICIES = ("probselect", "fedlim")

ROUND_CSV_HEADER = ("round", "policy", "device_id", "gpu_name", "selected", "predicted_p",
                    "eta_threshold", "actual_latency_s", "met_deadline")


@dataclass(frozen=True)
class GroundTruthModel:
    """How the simulated devices actually behave.

    Efficiency is drawn from ``efficiency_dist`` and clamped (not redrawn)
    into ``efficiency_clamp``.  With jitter on, the compute phase is scaled by
    a uniform factor from ``jitter_range``.
    """

    efficiency_dist: EfficiencyDistribution = field(default_factory=EfficiencyDistribution)
    efficiency_clamp: tuple[float, float] = (0.01, 1.0)
    jitter_range: tuple[float, float] = (0.8, 1.2)
    jitter_enabled: bool = True

    def __post_init__(self):
        lo, hi = self.efficiency_clamp
        if not 0 < lo <= hi <= 1:
            raise ValueError(f"efficiency_clamp needs 0 < low <= high <= 1, got {self.efficiency_clamp!r}")
        jlo, jhi = self.jitter_range
        if not 0 < jlo <= jhi:
            raise ValueError(f"jitter_range needs 0 < min <= max, got {self.jitter_range!r}")


def draw_true_efficiency(gt: GroundTruthModel, rng: np.random.Generator, size=None):
    eta = rng.normal(gt.efficiency_dist.mean, gt.efficiency_dist.std_dev, size)
    eta = np.clip(eta, *gt.efficiency_clamp)
    return float(eta) if size is None else eta


def _draw_jitter(gt: GroundTruthModel, rng: np.random.Generator, size=None):
    if not gt.jitter_enabled:
        return 1.0 if size is None else np.ones(size)
    j = rng.uniform(*gt.jitter_range, size)
    return float(j) if size is None else j


def _realised_latency(profile: DeviceProfile, workload: Workload, eta, jitter):
    base = total_latency(profile, workload, 1.0)
    return base.download + compute_seconds(profile, workload, eta) * jitter + base.upload


def simulate_actual_latency(profile: DeviceProfile, workload: Workload, gt: GroundTruthModel,
                            rng: np.random.Generator, size=None):
    """Realised round latency for one device.

    Draws the efficiency first, then the jitter factor.  With ``size`` the
    result is an array of independent realisations.
    """
    eta = draw_true_efficiency(gt, rng, size)
    jitter = _draw_jitter(gt, rng, size)
    if size is None and not gt.jitter_enabled:
        return total_latency(profile, workload, eta).total
    return _realised_latency(profile, workload, eta, jitter)


@dataclass(frozen=True)
class DeviceOutcome:
    device_id: str
    gpu_name: str
    selected: bool
    predicted_p: float
    eta_threshold: Optional[float]
    # Only selected devices train, so unselected ones carry None here.
    actual_latency: Optional[float]
    met_deadline: Optional[bool]


@dataclass(frozen=True)
class RoundResult:
    round_index: int
    policy: str
    outcomes: tuple[DeviceOutcome, ...]

    @property
    def selected_count(self) -> int:
        return sum(o.selected for o in self.outcomes)

    @property
    def compliant_count(self) -> int:
        return sum(bool(o.met_deadline) for o in self.outcomes if o.selected)


@dataclass(frozen=True)
class ExperimentConfig:
    workload: Workload
    slo: SloPolicy
    fleet: FleetConfig = field(default_factory=FleetConfig)
    ground_truth: GroundTruthModel = field(default_factory=GroundTruthModel)
    # Belief ProbSelect scores with; None means the ground-truth distribution.
    prior: Optional[EfficiencyDistribution] = None
    policies: tuple[str, ...] = POLICIES
    rounds: int = 100
    seed: int = 0
    fedlim_fraction: float = 1.0

    def __post_init__(self):
        if self.fleet.seed != self.seed:
            object.__setattr__(self, "fleet", replace(self.fleet, seed=self.seed))
        object.__setattr__(self, "policies", tuple(self.policies))
        unknown = [p for p in self.policies if p not in POLICIES]
        if unknown:
            raise ValueError(f"unknown policies {unknown!r}; choose from {POLICIES!r}")
        if self.rounds < 0:
            raise ValueError("rounds must be >= 0")
        if not 0 <= self.fedlim_fraction <= 1:
            raise ValueError("fedlim_fraction must lie in [0, 1]")

    @property
    def selection_prior(self) -> EfficiencyDistribution:
        return self.prior if self.prior is not None else self.ground_truth.efficiency_dist

    def to_dict(self) -> dict:
        d = asdict(self)
        d["prior"] = asdict(self.selection_prior)
        d["policies"] = list(self.policies)
        return d


def _stream(seed: int, *key: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=key))


def run_round(fleet: Sequence[DeviceProfile], workload: Workload, slo: SloPolicy, policy: str,
              gt: GroundTruthModel, seed: int, round_index: int,
              fleet_config: Optional[FleetConfig] = None,
              prior: Optional[EfficiencyDistribution] = None,
              fedlim_fraction: float = 1.0) -> RoundResult:
    """Sample candidates and links, apply ``policy`` and simulate the selected devices."""
    if not fleet:
        raise ValueError("fleet is empty")
    if policy not in POLICIES:
        raise ValueError(f"unknown policy {policy!r}")
    fleet_config = fleet_config or FleetConfig(fleet_size=len(fleet),
                                               candidates_per_round=min(100, len(fleet)))
    prior = prior or gt.efficiency_dist

    sampling = _stream(seed, round_index, 0)
    candidates = sample_candidates(fleet, fleet_config.candidates_per_round, sampling)
    candidates = [sample_bandwidths(c, fleet_config, sampling) for c in candidates]

    truth = _stream(seed, round_index, 1)
    k = len(candidates)
    etas = draw_true_efficiency(gt, truth, k)
    jitters = _draw_jitter(gt, truth, k)

    policy_rng = _stream(seed, round_index, 2, POLICIES.index(policy))
    if policy == "probselect":
        decisions = probselect(candidates, workload, slo, prior)
    else:
        decisions = fedlim_select(candidates, policy_rng, fedlim_fraction)

    outcomes = []
    for profile, decision, eta, jitter in zip(candidates, decisions, etas.tolist(), jitters.tolist()):
        latency = met = None
        if decision.selected:
            latency = float(_realised_latency(profile, workload, eta, jitter))
            met = latency <= slo.deadline
        outcomes.append(DeviceOutcome(profile.device_id, profile.gpu.name, decision.selected,
                                      decision.compliance_probability, decision.efficiency_threshold,
                                      latency, met))
    return RoundResult(round_index, policy, tuple(outcomes))


def compliance_rate(results: Sequence[RoundResult]) -> Optional[float]:
    """Fraction of selected devices that met the deadline; None if nobody was selected."""
    selected = sum(r.selected_count for r in results)
    if selected == 0:
        return None
    return sum(r.compliant_count for r in results) / selected


def waste_rate(results: Sequence[RoundResult]) -> Optional[float]:
    rate = compliance_rate(results)
    return None if rate is None else 1.0 - rate


def relative_waste_reduction(waste_a: Optional[float], waste_b: Optional[float]) -> Optional[float]:
    """How much of baseline waste ``waste_b`` policy ``a`` removes."""
    if waste_a is None or waste_b is None or waste_b == 0:
        return None
    return (waste_b - waste_a) / waste_b


@dataclass(frozen=True)
class ExperimentReport:
    config: dict
    policy: str
    rounds: tuple[RoundResult, ...]

    @property
    def selected_total(self) -> int:
        return sum(r.selected_count for r in self.rounds)

    @property
    def compliant_total(self) -> int:
        return sum(r.compliant_count for r in self.rounds)

    @property
    def slo_compliance_rate(self) -> Optional[float]:
        return compliance_rate(self.rounds)

    @property
    def computational_waste_rate(self) -> Optional[float]:
        return waste_rate(self.rounds)

    def summary(self) -> dict:
        return {
            "config": self.config,
            "policy": self.policy,
            "rounds": len(self.rounds),
            "selected_total": self.selected_total,
            "compliant_total": self.compliant_total,
            "slo_compliance_rate": self.slo_compliance_rate,
            "computational_waste_rate": self.computational_waste_rate,
        }

    def to_json(self) -> str:
        return json.dumps(self.summary(), indent=2, allow_nan=False) + "\n"

    def rounds_csv(self) -> str:
        buf = io.StringIO()
        write_rounds_csv(self.rounds, buf)
        return buf.getvalue()


def run_experiment(config: ExperimentConfig, workers: int = 1) -> dict[str, ExperimentReport]:
    """Run every configured policy for ``config.rounds`` rounds.

    ``workers > 1`` evaluates rounds on a thread pool; output is identical to
    the sequential run because each round owns its random streams.
    """
    fleet_cfg = config.fleet
    fleet = generate_fleet(fleet_cfg, config.workload)
    echo = config.to_dict()

    def one(job):
        policy, r = job
        return run_round(fleet, config.workload, config.slo, policy, config.ground_truth,
                         config.seed, r, fleet_cfg, config.selection_prior, config.fedlim_fraction)

    jobs = [(p, r) for p in config.policies for r in range(config.rounds)]
    if workers > 1 and jobs:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(one, jobs))
    else:
        results = [one(j) for j in jobs]

    reports = {}
    for p in config.policies:
        rounds = tuple(sorted((res for res in results if res.policy == p), key=lambda res: res.round_index))
        reports[p] = ExperimentReport(echo, p, rounds)
    return reports


def _fmt_float(x: Optional[float]) -> str:
    if x is None:
        return ""
    if math.isinf(x):
        return "inf"
    return repr(float(x))


def _fmt_bool(b: Optional[bool]) -> str:
    return "" if b is None else ("true" if b else "false")


def write_rounds_csv(rounds: Sequence[RoundResult], fh) -> None:
    writer = csv.writer(fh, lineterminator="\n")
    writer.writerow(ROUND_CSV_HEADER)
    for res in rounds:
        for o in res.outcomes:
            writer.writerow([res.round_index, res.policy, o.device_id, o.gpu_name, _fmt_bool(o.selected),
                             _fmt_float(o.predicted_p), _fmt_float(o.eta_threshold),
                             _fmt_float(o.actual_latency), _fmt_bool(o.met_deadline)])


def aggregate_rounds_csv(fh) -> dict[str, dict]:
    """Recompute per-policy totals and rates from a rounds CSV."""
    totals: dict[str, dict] = {}
    for row in csv.DictReader(fh):
        t = totals.setdefault(row["policy"], {"selected_total": 0, "compliant_total": 0})
        if row["selected"] == "true":
            t["selected_total"] += 1
            t["compliant_total"] += row["met_deadline"] == "true"
    for t in totals.values():
        rate = t["compliant_total"] / t["selected_total"] if t["selected_total"] else None
        t["slo_compliance_rate"] = rate
        t["computational_waste_rate"] = None if rate is None else 1.0 - rate
    return totals
