"""Analytical latency model for GPU-accelerated federated training rounds.

A round is split into download, compute and upload phases.  Compute is the
one-off model load over PCIe plus, per local pass over the data, the FLOP
work at a fraction ``eta`` of peak throughput and the host-to-GPU transfer
of every sample.

Units are canonical everywhere: bytes, bits per second for network links,
bytes per second for PCIe, hertz, FLOPs and seconds.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Iterator, Optional

MEASUREMENT_HEADER = ("device_id", "gpu_name", "workload_name", "measured_compute_seconds")


class InfeasibleMeasurementError(ValueError):
    """Measured compute time does not exceed the data-movement overhead."""


@dataclass(frozen=True)
class GpuSpec:
    name: str
    ops_per_cycle: float
    core_count: int
    boost_clock: float  # Hz
    pcie_bandwidth: float  # bytes/s

    def __post_init__(self):
        if self.ops_per_cycle < 1 or self.core_count < 1:
            raise ValueError(f"{self.name}: ops_per_cycle and core_count must be >= 1")
        if not self.boost_clock > 0 or not self.pcie_bandwidth > 0:
            raise ValueError(f"{self.name}: boost_clock and pcie_bandwidth must be > 0")
        if not math.isfinite(self.ops_per_cycle * self.boost_clock * self.core_count):
            raise ValueError(f"{self.name}: peak FLOPS must be finite")


@dataclass(frozen=True)
class Workload:
    """A model/dataset pair.

    ``epoch_factor`` is the number of local passes over the dataset per
    round; only this product of the convergence constant and the accuracy
    term ever enters the latency model.
    """

    name: str
    model_size: float  # bytes
    flops_per_sample: float
    sample_size: float  # bytes
    dataset_size: int
    epoch_factor: float = 1.0

    def __post_init__(self):
        if self.model_size < 0 or self.sample_size < 0:
            raise ValueError(f"{self.name}: model_size and sample_size must be >= 0")
        if not self.flops_per_sample > 0:
            raise ValueError(f"{self.name}: flops_per_sample must be > 0")
        if not self.epoch_factor > 0:
            raise ValueError(f"{self.name}: epoch_factor must be > 0")
        if self.dataset_size < 0:
            raise ValueError(f"{self.name}: dataset_size must be >= 0")


@dataclass(frozen=True)
class DeviceProfile:
    """What a candidate device reports before selection.

    Bandwidths are ``None`` until a round assigns them.
    """

    device_id: str
    gpu: GpuSpec
    dataset_size: int
    upload_bandwidth: Optional[float] = None  # bits/s
    download_bandwidth: Optional[float] = None  # bits/s

    def __post_init__(self):
        if self.dataset_size < 0:
            raise ValueError(f"{self.device_id}: dataset_size must be >= 0")
        for bw in (self.upload_bandwidth, self.download_bandwidth):
            if bw is not None and not bw > 0:
                raise ValueError(f"{self.device_id}: bandwidths must be > 0")

    @property
    def has_bandwidths(self) -> bool:
        return self.upload_bandwidth is not None and self.download_bandwidth is not None


@dataclass(frozen=True)
class LatencyBreakdown:
    download: float
    compute: float
    upload: float

    @property
    def total(self) -> float:
        # Fixed summation order: download, compute, upload.
        return self.download + self.compute + self.upload


def peak_flops(gpu: GpuSpec) -> float:
    return gpu.ops_per_cycle * gpu.boost_clock * gpu.core_count


def _transfer_seconds(model_size: float, bandwidth: float) -> float:
    if not bandwidth > 0:
        raise ValueError(f"bandwidth must be > 0, got {bandwidth!r}")
    return model_size * 8.0 / bandwidth


def download_latency(model_size: float, bandwidth: float) -> float:
    """Seconds to pull ``model_size`` bytes over a ``bandwidth`` bit/s link."""
    return _transfer_seconds(model_size, bandwidth)


def upload_latency(model_size: float, bandwidth: float) -> float:
    """Seconds to push ``model_size`` bytes over a ``bandwidth`` bit/s link."""
    return _transfer_seconds(model_size, bandwidth)


def model_load_latency(workload: Workload, gpu: GpuSpec) -> float:
    return workload.model_size / gpu.pcie_bandwidth


def data_movement_overhead(profile: DeviceProfile, workload: Workload) -> float:
    """PCIe time that does not depend on efficiency: model load plus sample transfers."""
    pcie = profile.gpu.pcie_bandwidth
    return (workload.model_size / pcie
            + workload.epoch_factor * profile.dataset_size * workload.sample_size / pcie)


def _check_eta(eta: float) -> None:
    if not 0 < eta <= 1:
        raise ValueError(f"efficiency must lie in (0, 1], got {eta!r}")


def compute_seconds(profile: DeviceProfile, workload: Workload, eta):
    """Unchecked compute latency; ``eta`` may be a numpy array."""
    gpu = profile.gpu
    per_sample = workload.flops_per_sample / (peak_flops(gpu) * eta) + workload.sample_size / gpu.pcie_bandwidth
    return model_load_latency(workload, gpu) + workload.epoch_factor * profile.dataset_size * per_sample


def compute_latency(profile: DeviceProfile, workload: Workload, eta: float) -> float:
    _check_eta(eta)
    return compute_seconds(profile, workload, eta)


def batched_compute_latency(profile: DeviceProfile, workload: Workload, eta: float,
                            batch_count: int) -> float:
    """Compute latency evaluated batch by batch.

    Equivalent to :func:`compute_latency` for any batch count; kept as a
    cross-check of the per-sample simplification.
    """
    _check_eta(eta)
    gpu = profile.gpu
    batch_bytes = workload.sample_size * batch_count
    n_batches = profile.dataset_size / batch_count
    per_batch = (workload.flops_per_sample * batch_count / (peak_flops(gpu) * eta)
                 + batch_bytes / gpu.pcie_bandwidth)
    return model_load_latency(workload, gpu) + workload.epoch_factor * n_batches * per_batch


def _require_bandwidths(profile: DeviceProfile) -> None:
    if not profile.has_bandwidths:
        raise ValueError(f"{profile.device_id}: bandwidths have not been assigned")


def total_latency(profile: DeviceProfile, workload: Workload, eta: float) -> LatencyBreakdown:
    _require_bandwidths(profile)
    return LatencyBreakdown(
        download=download_latency(workload.model_size, profile.download_bandwidth),
        compute=compute_latency(profile, workload, eta),
        upload=upload_latency(workload.model_size, profile.upload_bandwidth),
    )


def extract_efficiency(measured_compute_time: float, profile: DeviceProfile,
                       workload: Workload) -> float:
    """Invert :func:`compute_latency` for the efficiency that explains a measurement.

    The result is not clamped: values above 1 mean the measurement beats the
    theoretical peak and should be treated as suspect by the caller.
    """
    overhead = data_movement_overhead(profile, workload)
    net = measured_compute_time - overhead
    if not net > 0:
        raise InfeasibleMeasurementError(
            f"measured {measured_compute_time!r} s does not exceed data-movement "
            f"overhead {overhead!r} s")
    work = workload.epoch_factor * profile.dataset_size * workload.flops_per_sample
    return work / (peak_flops(profile.gpu) * net)


@dataclass(frozen=True)
class Measurement:
    line: int
    device_id: str
    gpu_name: str
    workload_name: str
    measured_compute_seconds: float


class MeasurementSchemaError(ValueError):
    def __init__(self, line: int, message: str):
        super().__init__(f"line {line}: {message}")
        self.line = line


def read_measurements(path: str | Path) -> list[Measurement]:
    with open(path, newline="", encoding="utf-8") as fh:
        return list(parse_measurements(fh))


def parse_measurements(lines: Iterable[str]) -> Iterator[Measurement]:
    reader = csv.reader(lines)
    header = next(reader, None)
    if header is None or tuple(h.strip() for h in header) != MEASUREMENT_HEADER:
        raise MeasurementSchemaError(1, f"expected header {','.join(MEASUREMENT_HEADER)}")
    for row in reader:
        line = reader.line_num
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != len(MEASUREMENT_HEADER):
            raise MeasurementSchemaError(line, f"expected {len(MEASUREMENT_HEADER)} fields, got {len(row)}")
        device_id, gpu_name, workload_name, raw = (c.strip() for c in row)
        try:
            seconds = float(raw)
        except ValueError:
            raise MeasurementSchemaError(line, f"measured_compute_seconds {raw!r} is not a number") from None
        if not math.isfinite(seconds):
            raise MeasurementSchemaError(line, "measured_compute_seconds must be finite")
        yield Measurement(line, device_id, gpu_name, workload_name, seconds)
