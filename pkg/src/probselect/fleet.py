"""Hardware and workload catalogs, fleet generation and per-round sampling."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from .model import DeviceProfile, GpuSpec, Workload
from .selection import SloPolicy

MBPS = 1e6

# decimal exponents of the table display units
MHZ = 6
GB_PER_S = 9
MB = 6
GFLOP = 9

# name, ops/cycle, cores, boost clock (MHz), PCIe (GB/s)
_GPU_TABLE = (
    ("RTX 4090", 2, 16384, 2520, 31.5),
    ("Tesla V100", 2, 5120, 1380, 15.75),
    ("A100", 2, 6912, 1410, 31.5),
    ("A40", 2, 10752, 1740, 31.5),
    ("Tesla T4", 2, 2560, 1590, 15.75),
)

# name, model size (MB), samples, GFLOPs per sample, sample size (MB)
_WORKLOAD_TABLE = (
    ("ResNet-50", 97.49, 50_000, 24.53, 0.6),
    ("AlexNet", 233.08, 100_000, 4.28, 0.6),
    ("MobileNetV2", 13.37, 50_000, 1.80, 0.6),
)

# deadline (s), probability threshold
_SLO_TABLE = {
    "ResNet-50": (50.0, 0.90),
    "AlexNet": (125.0, 0.90),
    "MobileNetV2": (100.0, 0.90),
}


class ConfigError(ValueError):
    pass


def _decimal(value, exponent: int) -> float:
    # Scale through the decimal literal so 4.28 GFLOPs is exactly 4.28e9.
    return float(f"{value}e{exponent}")


def gpu_catalog() -> tuple[GpuSpec, ...]:
    return tuple(GpuSpec(name, w, p, _decimal(f, MHZ), _decimal(pci, GB_PER_S))
                 for name, w, p, f, pci in _GPU_TABLE)


def workload_catalog() -> tuple[Workload, ...]:
    return tuple(Workload(name, _decimal(ms, MB), _decimal(g, GFLOP), _decimal(ss, MB), d)
                 for name, ms, d, g, ss in _WORKLOAD_TABLE)


def display_gpu_row(gpu: GpuSpec) -> tuple:
    return (gpu.name, gpu.ops_per_cycle, gpu.core_count, gpu.boost_clock / 10**MHZ,
            gpu.pcie_bandwidth / 10**GB_PER_S)


def display_workload_row(w: Workload) -> tuple:
    return (w.name, w.model_size / 10**MB, w.dataset_size, w.flops_per_sample / 10**GFLOP,
            w.sample_size / 10**MB)


def _lookup(items, name, kind):
    for item in items:
        if item.name == name:
            return item
    known = ", ".join(i.name for i in items)
    raise KeyError(f"unknown {kind} {name!r}; known: {known}")


def get_gpu(name: str) -> GpuSpec:
    return _lookup(gpu_catalog(), name, "GPU")


def get_workload(name: str) -> Workload:
    return _lookup(workload_catalog(), name, "workload")


def default_slo(workload_name: str) -> SloPolicy:
    try:
        deadline, p = _SLO_TABLE[workload_name]
    except KeyError:
        raise KeyError(f"no default SLO for workload {workload_name!r}") from None
    return SloPolicy(deadline, p)


def _default_mix():
    return tuple((name, 0.2) for name, *_ in _GPU_TABLE)


@dataclass(frozen=True)
class FleetConfig:
    fleet_size: int = 1000
    gpu_mix: tuple[tuple[str, float], ...] = field(default_factory=_default_mix)
    candidates_per_round: int = 100
    upload_range: tuple[float, float] = (83 * MBPS, 181 * MBPS)
    download_range: tuple[float, float] = (650 * MBPS, 830 * MBPS)
    # Per-device multiplier on the workload dataset size; degenerate by default.
    dataset_multiplier_range: tuple[float, float] = (1.0, 1.0)
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "gpu_mix", tuple((str(n), float(f)) for n, f in self.gpu_mix))
        object.__setattr__(self, "upload_range", tuple(float(x) for x in self.upload_range))
        object.__setattr__(self, "download_range", tuple(float(x) for x in self.download_range))
        object.__setattr__(self, "dataset_multiplier_range",
                           tuple(float(x) for x in self.dataset_multiplier_range))
        if self.fleet_size < 0:
            raise ConfigError("fleet_size must be >= 0")
        if not 0 <= self.candidates_per_round <= self.fleet_size:
            raise ConfigError("candidates_per_round must lie in [0, fleet_size]")
        if not self.gpu_mix:
            raise ConfigError("gpu_mix must not be empty")
        if any(f < 0 for _, f in self.gpu_mix):
            raise ConfigError("gpu_mix fractions must be >= 0")
        total = math.fsum(f for _, f in self.gpu_mix)
        if abs(total - 1.0) > 1e-9:
            raise ConfigError(f"gpu_mix fractions sum to {total!r}, expected 1")
        for label, (lo, hi) in (("upload_range", self.upload_range),
                                ("download_range", self.download_range),
                                ("dataset_multiplier_range", self.dataset_multiplier_range)):
            if not 0 < lo <= hi:
                raise ConfigError(f"{label} needs 0 < min <= max, got {(lo, hi)!r}")


def allocate_counts(fractions: Sequence[float], total: int) -> list[int]:
    """Largest-remainder apportionment of ``total`` items; ties go to the earlier entry."""
    quotas = [f * total for f in fractions]
    counts = [math.floor(q) for q in quotas]
    leftover = total - sum(counts)
    order = sorted(range(len(quotas)), key=lambda i: (-(quotas[i] - counts[i]), i))
    for i in order[:leftover]:
        counts[i] += 1
    return counts


def generate_fleet(config: FleetConfig, workload: Workload) -> list[DeviceProfile]:
    """Build ``fleet_size`` devices whose GPU counts match ``gpu_mix`` exactly.

    GPUs are shuffled over device ids with a generator seeded by ``config.seed``.
    """
    gpus = [get_gpu(name) for name, _ in config.gpu_mix]
    counts = allocate_counts([f for _, f in config.gpu_mix], config.fleet_size)
    rng = np.random.default_rng(np.random.SeedSequence(config.seed, spawn_key=(0xF1EE7,)))
    assignment = np.repeat(np.arange(len(gpus)), counts)
    rng.shuffle(assignment)
    lo, hi = config.dataset_multiplier_range
    if lo == hi:
        sizes = [round(workload.dataset_size * lo)] * config.fleet_size
    else:
        sizes = [round(workload.dataset_size * m) for m in rng.uniform(lo, hi, config.fleet_size)]
    width = max(4, len(str(max(config.fleet_size - 1, 0))))
    return [DeviceProfile(f"dev-{i:0{width}d}", gpus[g], sizes[i])
            for i, g in enumerate(assignment.tolist())]


def sample_candidates(fleet: Sequence[DeviceProfile], k: int,
                      rng: np.random.Generator) -> list[DeviceProfile]:
    if not 0 <= k <= len(fleet):
        raise ValueError(f"cannot sample {k} candidates from a fleet of {len(fleet)}")
    idx = rng.choice(len(fleet), size=k, replace=False)
    return [fleet[i] for i in idx.tolist()]


def sample_bandwidths(profile: DeviceProfile, config: FleetConfig,
                      rng: np.random.Generator) -> DeviceProfile:
    up = float(rng.uniform(*config.upload_range))
    down = float(rng.uniform(*config.download_range))
    return replace(profile, upload_bandwidth=up, download_bandwidth=down)


def fleet_to_records(fleet: Sequence[DeviceProfile]) -> list[dict]:
    return [{"device_id": d.device_id, "gpu_name": d.gpu.name, "upload_bps": d.upload_bandwidth,
             "download_bps": d.download_bandwidth, "dataset_size": d.dataset_size}
            for d in fleet]


def fleet_from_records(records: Sequence[dict]) -> list[DeviceProfile]:
    fleet = []
    for i, rec in enumerate(records):
        try:
            fleet.append(DeviceProfile(
                device_id=str(rec["device_id"]),
                gpu=get_gpu(rec["gpu_name"]),
                dataset_size=int(rec["dataset_size"]),
                upload_bandwidth=rec.get("upload_bps"),
                download_bandwidth=rec.get("download_bps"),
            ))
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"device record {i}: {exc}") from None
    return fleet


def export_fleet(fleet: Sequence[DeviceProfile], path: str | Path) -> None:
    Path(path).write_text(json.dumps(fleet_to_records(fleet), indent=2) + "\n", encoding="utf-8")


def import_fleet(path: str | Path) -> list[DeviceProfile]:
    return fleet_from_records(json.loads(Path(path).read_text(encoding="utf-8")))
