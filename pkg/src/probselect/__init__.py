"""Probabilistic, deadline-aware client selection for GPU federated learning."""

from .engine import ExperimentConfig, GroundTruthModel, run_experiment
from .estimators import LatencyRegressor, ProbSelectClassifier, profiles_to_array
from .fleet import FleetConfig, default_slo, generate_fleet, gpu_catalog, workload_catalog
from .model import (
    DeviceProfile,
    GpuSpec,
    LatencyBreakdown,
    Workload,
    compute_latency,
    extract_efficiency,
    total_latency,
)
from .selection import EfficiencyDistribution, SloPolicy, fedlim_select, probselect

__version__ = "0.1.0"

__all__ = [
    "DeviceProfile", "EfficiencyDistribution", "ExperimentConfig", "FleetConfig", "GpuSpec",
    "GroundTruthModel", "LatencyBreakdown", "LatencyRegressor", "ProbSelectClassifier", "SloPolicy",
    "Workload", "compute_latency", "default_slo", "extract_efficiency", "fedlim_select",
    "generate_fleet", "gpu_catalog", "probselect", "profiles_to_array", "run_experiment",
    "total_latency", "workload_catalog",
]
