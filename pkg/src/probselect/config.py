"""JSON experiment configuration.

Keys mirror the dataclass fields, so the ``config`` echoed into a report can
be fed back in unchanged.  Anything omitted falls back to the catalog and
fleet defaults.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, fields
from importlib import resources
from pathlib import Path
from typing import Any, Optional

from .engine import POLICIES, ExperimentConfig, GroundTruthModel
from .fleet import ConfigError, FleetConfig, default_slo, get_workload
from .model import Workload
from .selection import EfficiencyDistribution, SloPolicy

TOP_LEVEL_KEYS = {"workload", "epoch_factor", "slo", "fleet", "ground_truth", "prior", "policies",
                  "rounds", "seed", "fedlim_fraction", "output_dir"}

BUNDLED = {
    "paper-resnet50.json": "ResNet-50",
    "paper-alexnet.json": "AlexNet",
    "paper-mobilenetv2.json": "MobileNetV2",
}


@dataclass(frozen=True)
class LoadedConfig:
    experiment: ExperimentConfig
    output_dir: Optional[str]


class ConfigFileError(ConfigError):
    def __init__(self, source: str, line: Optional[int], message: str):
        where = f"{source}:{line}" if line else source
        super().__init__(f"{where}: {message}")
        self.line = line


class _Problem(Exception):
    def __init__(self, key: str, message: str):
        super().__init__(message)
        self.key = key


def _line_of(text: str, key: str) -> Optional[int]:
    m = re.search(r'"%s"\s*:' % re.escape(key), text)
    return text.count("\n", 0, m.start()) + 1 if m else None


def _build(cls, data: Any, path: str, convert=None):
    if not isinstance(data, dict):
        raise _Problem(path, f"expected an object for {path}")
    names = {f.name for f in fields(cls)}
    extra = sorted(set(data) - names)
    if extra:
        raise _Problem(extra[0], f"unknown key {extra[0]!r} in {path}; expected one of {sorted(names)}")
    kwargs = dict(data)
    if convert:
        kwargs = convert(kwargs)
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        raise _Problem(path, f"{path}: {exc}") from None


def _fleet_convert(kw):
    mix = kw.get("gpu_mix")
    if isinstance(mix, dict):
        kw["gpu_mix"] = tuple(mix.items())
    elif isinstance(mix, list):
        kw["gpu_mix"] = tuple(tuple(pair) for pair in mix)
    for key in ("upload_range", "download_range", "dataset_multiplier_range"):
        if isinstance(kw.get(key), list):
            kw[key] = tuple(kw[key])
    return kw


def _truth_convert(kw):
    if "efficiency_dist" in kw:
        kw["efficiency_dist"] = _build(EfficiencyDistribution, kw["efficiency_dist"],
                                       "ground_truth.efficiency_dist")
    for key in ("efficiency_clamp", "jitter_range"):
        if key in kw:
            kw[key] = tuple(kw[key])
    return kw


def _merge(base: dict, extra: dict) -> dict:
    out = dict(base)
    for key, value in extra.items():
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = _merge(out[key], value)
        else:
            out[key] = value
    return out


def resolve_config(data: dict, overrides: Optional[dict] = None) -> LoadedConfig:
    """Apply defaults to a parsed config mapping; raises ``_Problem`` on bad input.

    ``overrides`` is merged key by key into nested sections.
    """
    data = _merge(data, overrides or {})
    extra = sorted(set(data) - TOP_LEVEL_KEYS)
    if extra:
        raise _Problem(extra[0], f"unknown top-level key {extra[0]!r}")
    if "workload" not in data:
        raise _Problem("workload", "missing required key 'workload'")

    wl = data["workload"]
    if isinstance(wl, str):
        try:
            workload = get_workload(wl)
        except KeyError as exc:
            raise _Problem("workload", str(exc.args[0])) from None
    else:
        workload = _build(Workload, wl, "workload")
    if "epoch_factor" in data:
        try:
            workload = Workload(**{**{f.name: getattr(workload, f.name) for f in fields(Workload)},
                                   "epoch_factor": data["epoch_factor"]})
        except (TypeError, ValueError) as exc:
            raise _Problem("epoch_factor", str(exc)) from None

    slo_data = data.get("slo", {})
    if not isinstance(slo_data, dict):
        raise _Problem("slo", "expected an object for slo")
    try:
        base = default_slo(workload.name)
        slo_defaults = {"deadline": base.deadline, "probability_threshold": base.probability_threshold}
    except KeyError:
        slo_defaults = {}
    slo = _build(SloPolicy, {**slo_defaults, **slo_data}, "slo")

    fleet = _build(FleetConfig, data.get("fleet", {}), "fleet", _fleet_convert)
    truth = _build(GroundTruthModel, data.get("ground_truth", {}), "ground_truth", _truth_convert)
    prior = None
    if data.get("prior") is not None:
        prior = _build(EfficiencyDistribution, data["prior"], "prior")

    policies = data.get("policies", list(POLICIES))
    if isinstance(policies, str):
        policies = list(POLICIES) if policies == "both" else [policies]
    try:
        experiment = ExperimentConfig(
            workload=workload, slo=slo, fleet=fleet, ground_truth=truth, prior=prior,
            policies=tuple(policies), rounds=int(data.get("rounds", 100)),
            seed=int(data.get("seed", 0)), fedlim_fraction=float(data.get("fedlim_fraction", 1.0)))
    except (TypeError, ValueError) as exc:
        raise _Problem("policies", str(exc)) from None
    return LoadedConfig(experiment, data.get("output_dir"))


def parse_config(text: str, source: str = "<config>", overrides: Optional[dict] = None) -> LoadedConfig:
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigFileError(source, exc.lineno, f"col {exc.colno}: {exc.msg}") from None
    if not isinstance(data, dict):
        raise ConfigFileError(source, 1, "top level must be a JSON object")
    try:
        return resolve_config(data, overrides)
    except _Problem as exc:
        raise ConfigFileError(source, _line_of(text, exc.key.split(".")[-1]), str(exc)) from None


def load_config(path: str | Path, overrides: Optional[dict] = None) -> LoadedConfig:
    """Read a config file; a bare bundled name such as ``paper-mobilenetv2.json`` also works."""
    p = Path(path)
    if not p.exists() and p.name in BUNDLED and p.parent == Path("."):
        text = bundled_config_text(p.name)
    else:
        text = p.read_text(encoding="utf-8")
    return parse_config(text, str(path), overrides)


def bundled_config_text(name: str) -> str:
    return resources.files("probselect.configs").joinpath(name).read_text(encoding="utf-8")
