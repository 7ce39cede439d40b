import json
from collections import Counter

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from probselect.fleet import (
    ConfigError,
    FleetConfig,
    allocate_counts,
    default_slo,
    display_gpu_row,
    display_workload_row,
    export_fleet,
    fleet_from_records,
    fleet_to_records,
    generate_fleet,
    get_gpu,
    get_workload,
    gpu_catalog,
    import_fleet,
    sample_bandwidths,
    sample_candidates,
    workload_catalog,
)


def test_gpu_catalog():
    cat = {g.name: g for g in gpu_catalog()}
    assert len(cat) == 5
    rtx = cat["RTX 4090"]
    assert (rtx.ops_per_cycle, rtx.core_count, rtx.boost_clock, rtx.pcie_bandwidth) == (2, 16384, 2.52e9, 31.5e9)
    v100 = cat["Tesla V100"]
    assert (v100.pcie_bandwidth, v100.boost_clock, v100.core_count) == (15.75e9, 1.38e9, 5120)


def test_workload_catalog():
    cat = {w.name: w for w in workload_catalog()}
    r = cat["ResNet-50"]
    assert (r.model_size, r.flops_per_sample, r.sample_size, r.dataset_size) == (97.49e6, 24.53e9, 0.6e6, 50000)
    a = cat["AlexNet"]
    assert (a.model_size, a.flops_per_sample, a.dataset_size) == (233.08e6, 4.28e9, 100000)
    m = cat["MobileNetV2"]
    assert (m.model_size, m.flops_per_sample, m.dataset_size) == (13.37e6, 1.80e9, 50000)
    assert all(w.epoch_factor == 1.0 for w in cat.values())


def test_catalog_display_round_trip():
    assert [display_gpu_row(g) for g in gpu_catalog()] == [
        ("RTX 4090", 2, 16384, 2520, 31.5), ("Tesla V100", 2, 5120, 1380, 15.75),
        ("A100", 2, 6912, 1410, 31.5), ("A40", 2, 10752, 1740, 31.5), ("Tesla T4", 2, 2560, 1590, 15.75)]
    assert [display_workload_row(w) for w in workload_catalog()] == [
        ("ResNet-50", 97.49, 50000, 24.53, 0.6), ("AlexNet", 233.08, 100000, 4.28, 0.6),
        ("MobileNetV2", 13.37, 50000, 1.80, 0.6)]


@pytest.mark.parametrize("name, deadline", [("ResNet-50", 50), ("AlexNet", 125), ("MobileNetV2", 100)])
def test_default_slo(name, deadline):
    slo = default_slo(name)
    assert (slo.deadline, slo.probability_threshold) == (deadline, 0.90)


def test_unknown_names():
    with pytest.raises(KeyError):
        default_slo("VGG")
    with pytest.raises(KeyError):
        get_gpu("H100")
    with pytest.raises(KeyError):
        get_workload("VGG")


def test_generate_fleet_exact_mix(resnet):
    fleet = generate_fleet(FleetConfig(), resnet)
    assert len(fleet) == 1000
    assert Counter(d.gpu.name for d in fleet) == {g.name: 200 for g in gpu_catalog()}
    assert all(d.dataset_size == 50000 and not d.has_bandwidths for d in fleet)
    assert len({d.device_id for d in fleet}) == 1000


def test_generate_small_fleet(resnet):
    fleet = generate_fleet(FleetConfig(fleet_size=5, candidates_per_round=5), resnet)
    assert sorted(d.gpu.name for d in fleet) == sorted(g.name for g in gpu_catalog())


def test_generate_fleet_deterministic(resnet):
    cfg = FleetConfig(seed=42)
    assert generate_fleet(cfg, resnet) == generate_fleet(cfg, resnet)
    assert json.dumps(fleet_to_records(generate_fleet(cfg, resnet))) == json.dumps(
        fleet_to_records(generate_fleet(FleetConfig(seed=42), resnet)))
    assert [d.gpu.name for d in generate_fleet(FleetConfig(seed=43), resnet)] != [
        d.gpu.name for d in generate_fleet(cfg, resnet)]


def test_dataset_multiplier(resnet):
    fleet = generate_fleet(FleetConfig(dataset_multiplier_range=(0.5, 1.5)), resnet)
    sizes = [d.dataset_size for d in fleet]
    assert min(sizes) >= 25000 and max(sizes) <= 75000 and len(set(sizes)) > 100


@pytest.mark.parametrize("kwargs", [
    dict(gpu_mix=(("A100", 0.5), ("A40", 0.4))),
    dict(candidates_per_round=1001),
    dict(upload_range=(2.0, 1.0)),
    dict(download_range=(0.0, 1.0)),
])
def test_fleet_config_invariants(kwargs):
    with pytest.raises(ConfigError):
        FleetConfig(**kwargs)


@given(st.lists(st.integers(0, 100), min_size=1, max_size=8), st.integers(0, 5000))
def test_allocate_counts(weights, total):
    if sum(weights) == 0:
        return
    fractions = [w / sum(weights) for w in weights]
    counts = allocate_counts(fractions, total)
    assert sum(counts) == total
    assert all(abs(c - f * total) < 1 for c, f in zip(counts, fractions))


def test_sample_candidates(resnet):
    fleet = generate_fleet(FleetConfig(), resnet)
    whole = sample_candidates(fleet, 1000, np.random.default_rng(0))
    assert sorted(d.device_id for d in whole) == sorted(d.device_id for d in fleet)
    assert whole != fleet
    assert sample_candidates(fleet, 0, np.random.default_rng(0)) == []
    a = sample_candidates(fleet, 100, np.random.default_rng(9))
    b = sample_candidates(fleet, 100, np.random.default_rng(9))
    assert a == b and len({d.device_id for d in a}) == 100
    with pytest.raises(ValueError):
        sample_candidates(fleet, 1001, np.random.default_rng(0))


def test_candidate_coverage(resnet):
    fleet = generate_fleet(FleetConfig(), resnet)
    rng = np.random.default_rng(2024)
    seen = set()
    for _ in range(100):
        seen.update(d.device_id for d in sample_candidates(fleet, 100, rng))
    # Full coverage has probability ~ 1 - 1000 * 0.9**100 ~ 0.974; this seed covers all.
    assert len(seen) == 1000


def test_sample_bandwidths_ranges(resnet):
    cfg = FleetConfig()
    dev = generate_fleet(cfg, resnet)[0]
    rng = np.random.default_rng(1)
    draws = [sample_bandwidths(dev, cfg, rng) for _ in range(2000)]
    assert all(83e6 <= d.upload_bandwidth <= 181e6 for d in draws)
    assert all(650e6 <= d.download_bandwidth <= 830e6 for d in draws)
    fixed = FleetConfig(upload_range=(1e8, 1e8), download_range=(5e8, 5e8))
    d = sample_bandwidths(dev, fixed, rng)
    assert (d.upload_bandwidth, d.download_bandwidth) == (1e8, 5e8)


def test_sample_bandwidths_mean(resnet):
    cfg = FleetConfig()
    dev = generate_fleet(cfg, resnet)[0]
    rng = np.random.default_rng(5)
    ups = np.array([sample_bandwidths(dev, cfg, rng).upload_bandwidth for _ in range(100_000)])
    assert abs(ups.mean() - 132e6) / 132e6 < 0.01


def test_fleet_json_round_trip(tmp_path, resnet):
    cfg = FleetConfig(fleet_size=20, candidates_per_round=5)
    rng = np.random.default_rng(3)
    fleet = [sample_bandwidths(d, cfg, rng) for d in generate_fleet(cfg, resnet)]
    path = tmp_path / "fleet.json"
    export_fleet(fleet, path)
    records = json.loads(path.read_text())
    assert set(records[0]) == {"device_id", "gpu_name", "upload_bps", "download_bps", "dataset_size"}
    assert import_fleet(path) == fleet


def test_fleet_records_errors():
    with pytest.raises(ConfigError, match="record 0"):
        fleet_from_records([{"device_id": "a", "gpu_name": "H100", "dataset_size": 1}])
