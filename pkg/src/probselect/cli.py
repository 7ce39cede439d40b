"""Command-line front end: ``run``, ``predict``, ``thresholds`` and ``extract``."""

from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path
from typing import Optional, Sequence

from .config import ConfigFileError, load_config
from .engine import POLICIES, ExperimentReport, relative_waste_reduction, run_experiment
from .fleet import MBPS, default_slo, get_gpu, get_workload, gpu_catalog
from .model import (
    DeviceProfile,
    InfeasibleMeasurementError,
    MeasurementSchemaError,
    Workload,
    extract_efficiency,
    read_measurements,
    total_latency,
)
from .selection import (
    EfficiencyDistribution,
    SloPolicy,
    compliance_probability,
    efficiency_threshold,
)

EXIT_OK = 0
EXIT_FLAGGED = 1
EXIT_USAGE = 2
EXIT_IO = 3

DEFAULT_UP = 132 * MBPS
DEFAULT_DOWN = 740 * MBPS


class UsageError(Exception):
    pass


def _with_epoch_factor(workload: Workload, epoch_factor: float) -> Workload:
    return Workload(workload.name, workload.model_size, workload.flops_per_sample,
                    workload.sample_size, workload.dataset_size, epoch_factor)


def _lookup(fn, name):
    try:
        return fn(name)
    except KeyError as exc:
        raise UsageError(exc.args[0]) from None


def _fmt(x: Optional[float], digits: int = 6) -> str:
    if x is None:
        return "n/a"
    if math.isinf(x):
        return "inf"
    return f"{x:.{digits}f}"


def format_summary(reports: dict[str, ExperimentReport]) -> str:
    lines = [f"{'policy':<12}{'rounds':>8}{'selected':>10}{'compliant':>11}{'compliance':>12}{'waste':>10}"]
    for name, rep in reports.items():
        lines.append(f"{name:<12}{len(rep.rounds):>8}{rep.selected_total:>10}{rep.compliant_total:>11}"
                     f"{_fmt(rep.slo_compliance_rate):>12}{_fmt(rep.computational_waste_rate):>10}")
    if "probselect" in reports and "fedlim" in reports:
        ps, fl = reports["probselect"], reports["fedlim"]
        gain = None
        if ps.slo_compliance_rate is not None and fl.slo_compliance_rate is not None:
            gain = ps.slo_compliance_rate - fl.slo_compliance_rate
        red = relative_waste_reduction(ps.computational_waste_rate, fl.computational_waste_rate)
        lines.append("")
        lines.append(f"compliance gain (probselect - fedlim): {_fmt(gain)}")
        lines.append(f"relative waste reduction vs fedlim:    {_fmt(red)}")
    return "\n".join(lines) + "\n"


def cmd_run(config_path: str, output_dir: Optional[str] = None, *, seed: Optional[int] = None,
            policy: Optional[str] = None, no_jitter: bool = False, rounds: Optional[int] = None,
            workers: int = 1, out=None) -> int:
    out = out or sys.stdout
    overrides: dict = {}
    if seed is not None:
        overrides["seed"] = seed
    if rounds is not None:
        overrides["rounds"] = rounds
    if policy is not None:
        overrides["policies"] = list(POLICIES) if policy == "both" else [policy]
    if no_jitter:
        overrides["ground_truth"] = {"jitter_enabled": False}
    try:
        loaded = load_config(config_path, overrides)
    except ConfigFileError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"error: cannot read config: {exc}", file=sys.stderr)
        return EXIT_IO

    target = Path(output_dir or loaded.output_dir or "runs")
    reports = run_experiment(loaded.experiment, workers=workers)
    summary = format_summary(reports)
    try:
        target.mkdir(parents=True, exist_ok=True)
        for name, rep in reports.items():
            sub = target / name
            sub.mkdir(exist_ok=True)
            (sub / "report.json").write_text(rep.to_json(), encoding="utf-8")
            (sub / "rounds.csv").write_text(rep.rounds_csv(), encoding="utf-8")
        (target / "summary.txt").write_text(summary, encoding="utf-8")
    except OSError as exc:
        print(f"error: cannot write outputs: {exc}", file=sys.stderr)
        return EXIT_IO
    out.write(summary)
    return EXIT_OK


def cmd_predict(gpu_name: str, workload_name: str, eta: float, up_bps: float = DEFAULT_UP,
                down_bps: float = DEFAULT_DOWN, epoch_factor: float = 1.0, out=None) -> int:
    out = out or sys.stdout
    if not 0 < eta <= 1:
        raise UsageError(f"--eta must lie in (0, 1], got {eta}")
    if not up_bps > 0 or not down_bps > 0:
        raise UsageError("bandwidths must be > 0")
    if not epoch_factor > 0:
        raise UsageError("--epoch-factor must be > 0")
    gpu = _lookup(get_gpu, gpu_name)
    workload = _with_epoch_factor(_lookup(get_workload, workload_name), epoch_factor)
    profile = DeviceProfile("query", gpu, workload.dataset_size, up_bps, down_bps)
    b = total_latency(profile, workload, eta)
    out.write(f"download_s {b.download:.6f}\ncompute_s  {b.compute:.6f}\n"
              f"upload_s   {b.upload:.6f}\ntotal_s    {b.total:.6f}\n")
    return EXIT_OK


def cmd_thresholds(workload_name: str, deadline: Optional[float] = None, p_slo: Optional[float] = None,
                   up_bps: float = DEFAULT_UP, down_bps: float = DEFAULT_DOWN, mean: float = 0.5,
                   std_dev: float = 0.25, epoch_factor: float = 1.0, out=None) -> int:
    out = out or sys.stdout
    workload = _with_epoch_factor(_lookup(get_workload, workload_name), epoch_factor)
    base = default_slo(workload.name)
    try:
        slo = SloPolicy(base.deadline if deadline is None else deadline,
                        base.probability_threshold if p_slo is None else p_slo)
        dist = EfficiencyDistribution(mean, std_dev)
        profiles = [DeviceProfile(g.name, g, workload.dataset_size, up_bps, down_bps) for g in gpu_catalog()]
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    out.write(f"# {workload.name}: deadline {slo.deadline:g} s, p_slo {slo.probability_threshold:g}, "
              f"up {up_bps:g} b/s, down {down_bps:g} b/s\n")
    out.write(f"{'gpu':<12}{'eta_threshold':>15}{'p':>11}  selected\n")
    for profile in profiles:
        eta_th = efficiency_threshold(profile, workload, slo)
        p = compliance_probability(eta_th, dist)
        chosen = "yes" if not math.isinf(eta_th) and p >= slo.probability_threshold else "no"
        out.write(f"{profile.gpu.name:<12}{_fmt(eta_th):>15}{_fmt(p):>11}  {chosen}\n")
    return EXIT_OK


def extract_rows(measurements_csv: str, epoch_factor: float = 1.0) -> list[dict]:
    rows = []
    for m in read_measurements(measurements_csv):
        try:
            gpu = get_gpu(m.gpu_name)
            workload = _with_epoch_factor(get_workload(m.workload_name), epoch_factor)
        except KeyError as exc:
            raise MeasurementSchemaError(m.line, exc.args[0]) from None
        profile = DeviceProfile(m.device_id, gpu, workload.dataset_size)
        try:
            eta = extract_efficiency(m.measured_compute_seconds, profile, workload)
        except InfeasibleMeasurementError:
            eta = None
        rows.append({"line": m.line, "device_id": m.device_id, "gpu_name": m.gpu_name,
                     "workload_name": m.workload_name,
                     "measured_compute_seconds": m.measured_compute_seconds,
                     "efficiency": eta, "feasible": eta is not None and 0 < eta <= 1})
    return rows


def cmd_extract(measurements_csv: str, json_out: Optional[str] = None, epoch_factor: float = 1.0,
                out=None) -> int:
    out = out or sys.stdout
    try:
        rows = extract_rows(measurements_csv, epoch_factor)
    except MeasurementSchemaError as exc:
        print(f"error: {measurements_csv}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    out.write(f"{'device_id':<14}{'gpu':<12}{'workload':<13}{'measured_s':>14}{'efficiency':>12}  feasible\n")
    for r in rows:
        eff = "infinite" if r["efficiency"] is None else f"{r['efficiency']:.6f}"
        out.write(f"{r['device_id']:<14}{r['gpu_name']:<12}{r['workload_name']:<13}"
                  f"{r['measured_compute_seconds']:>14.6f}{eff:>12}  {'yes' if r['feasible'] else 'no'}\n")
    if json_out:
        try:
            Path(json_out).write_text(json.dumps(rows, indent=2) + "\n", encoding="utf-8")
        except OSError as exc:
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_IO
    return EXIT_FLAGGED if any(not r["feasible"] for r in rows) else EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="probselect",
                                     description="Deadline-aware probabilistic client selection simulator.")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="simulate ProbSelect and FedLim over a device fleet")
    run.add_argument("--config", required=True, help="JSON config path or bundled config name")
    run.add_argument("--out", help="output directory (overrides the config's output_dir)")
    run.add_argument("--seed", type=int)
    run.add_argument("--policy", choices=[*POLICIES, "both"])
    run.add_argument("--no-jitter", action="store_true", help="disable compute-phase jitter")
    run.add_argument("--rounds", type=int)
    run.add_argument("--workers", type=int, default=1, help="threads used to evaluate rounds")

    pred = sub.add_parser("predict", help="latency breakdown for one GPU and workload")
    pred.add_argument("--gpu", required=True)
    pred.add_argument("--workload", required=True)
    pred.add_argument("--eta", type=float, required=True, help="efficiency in (0, 1]")
    pred.add_argument("--up", type=float, default=DEFAULT_UP, help="upload bandwidth, bits/s")
    pred.add_argument("--down", type=float, default=DEFAULT_DOWN, help="download bandwidth, bits/s")
    pred.add_argument("--epoch-factor", type=float, default=1.0)

    thr = sub.add_parser("thresholds", help="efficiency threshold and compliance per catalog GPU")
    thr.add_argument("--workload", required=True)
    thr.add_argument("--deadline", type=float, help="seconds; default from the workload SLO table")
    thr.add_argument("--p-slo", type=float)
    thr.add_argument("--up", type=float, default=DEFAULT_UP)
    thr.add_argument("--down", type=float, default=DEFAULT_DOWN)
    thr.add_argument("--mu", type=float, default=0.5)
    thr.add_argument("--sigma", type=float, default=0.25)
    thr.add_argument("--epoch-factor", type=float, default=1.0)

    ext = sub.add_parser("extract", help="efficiency factors from measured compute times")
    ext.add_argument("measurements", help="CSV: device_id,gpu_name,workload_name,measured_compute_seconds")
    ext.add_argument("--json", dest="json_out", help="also write the table as JSON")
    ext.add_argument("--epoch-factor", type=float, default=1.0)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "run":
            return cmd_run(args.config, args.out, seed=args.seed, policy=args.policy,
                           no_jitter=args.no_jitter, rounds=args.rounds, workers=args.workers)
        if args.command == "predict":
            return cmd_predict(args.gpu, args.workload, args.eta, args.up, args.down, args.epoch_factor)
        if args.command == "thresholds":
            return cmd_thresholds(args.workload, args.deadline, args.p_slo, args.up, args.down,
                                  args.mu, args.sigma, args.epoch_factor)
        return cmd_extract(args.measurements, args.json_out, args.epoch_factor)
    except UsageError as exc:
        parser.exit(EXIT_USAGE, f"{parser.prog}: error: {exc}\n")


if __name__ == "__main__":
    sys.exit(main())
