import csv

import pytest

from smpconv.bench import BENCH_COLUMNS, PRESETS, build_layer, cpu_microbench, write_bench_csv
from smpconv.conv import param_count
from smpconv.errors import ContractError
from smpconv.models.conv_models import BenchConfig, PositionSharing


def small_configs():
    return [
        BenchConfig(name="smp_k9", dim=2, kernel_extent=9, n_points=16, in_channels=2, out_channels=2),
        BenchConfig(name="smp_k33", dim=2, kernel_extent=33, n_points=16, in_channels=2, out_channels=2),
        BenchConfig(name="dense_k9", kind="dense", dim=2, kernel_extent=9, in_channels=2, out_channels=2),
        BenchConfig(name="smp1d", dim=1, kernel_extent=64, n_points=30, in_channels=2, out_channels=2),
    ]


def test_microbench_rows_and_params():
    report = cpu_microbench(small_configs(), input_shape=(8, 8), repetitions=3)
    names = [r.config_name for r in report.rows]
    assert names == [
        "smp_k9/forward",
        "smp_k9/forward_backward",
        "smp_k33/forward",
        "smp_k33/forward_backward",
        "dense_k9/forward",
        "smp1d/forward",
        "smp1d/forward_backward",
    ]
    params = {r.config_name: r.params for r in report.rows}
    assert params["smp_k9/forward"] == params["smp_k33/forward"] == 2 * (1 + 2 + 2) * 16
    assert params["dense_k9/forward"] == 2 * 2 * 81
    assert params["smp1d/forward"] == 2 * (1 + 1 + 2) * 30
    for row in report.rows:
        assert row.p10_ms <= row.median_ms <= row.p90_ms


def test_microbench_requires_three_repetitions():
    with pytest.raises(ContractError):
        cpu_microbench(small_configs()[:1], repetitions=2)


def test_bench_csv_schema(tmp_path):
    report = cpu_microbench(small_configs()[:1], input_shape=(8, 8), repetitions=3)
    path = write_bench_csv(report, tmp_path / "bench.csv")
    with path.open() as fh:
        rows = list(csv.DictReader(fh))
    assert list(rows[0]) == BENCH_COLUMNS
    assert len(rows) == 2


def test_build_layer_param_count_matches_config():
    cfg = BenchConfig(name="shared", dim=2, kernel_extent=17, n_points=10, in_channels=3, out_channels=4, position_sharing=PositionSharing.LAYER)
    assert param_count(build_layer(cfg)) == 3 * 10 + 4 * 3 * 10


def test_replk_preset_points():
    assert [(c.kernel_extent, c.n_points) for c in PRESETS["replk"]] == [(31, 240), (29, 210), (27, 182), (13, 42)]
    assert all(c.depthwise for c in PRESETS["replk"])


def test_repeated_runs_agree_within_timing_noise():
    first = cpu_microbench(small_configs(), input_shape=(8, 8), repetitions=5)
    second = cpu_microbench(small_configs(), input_shape=(8, 8), repetitions=5)
    assert [(r.config_name, r.params) for r in first.rows] == [(r.config_name, r.params) for r in second.rows]
    for a, b in zip(first.rows, second.rows):
        assert a.median_ms > 0 and b.median_ms > 0
        # sub-millisecond timings jitter by several x
        assert b.median_ms <= 20 * a.median_ms + 1.0
        assert a.median_ms <= 20 * b.median_ms + 1.0
