import csv
import math

import numpy as np
import pytest
from PIL import Image

from smpconv.errors import ContractError
from smpconv.experiments import (
    export_kernel_image,
    fit_function,
    fit_mse,
    kernel_image,
    make_target,
    run_seeds,
    target_from_filter,
    write_fit_report,
)
from smpconv.models.experiment_models import FitMode
from smpconv.models.smp_models import GridSpec, SmpFilter
from smpconv.models.train_models import TrainConfig
from smpconv.optim import init_smp
from smpconv.smp import rasterize


def test_make_target_shapes():
    target = make_target("product_sine", 21)
    assert target.values.shape == (21, 21)
    assert target.values[10, 10] == pytest.approx(0.0, abs=1e-12)
    with pytest.raises(ContractError):
        make_target("square_wave")


def test_zero_target_weights_collapse():
    cfg = TrainConfig(base_lr=5e-2, steps=200, seed=0)
    report, smp = fit_function(make_target("zero", 11), FitMode.MOVING, 8, cfg, r_init=0.5)
    assert report.final_mse <= 1e-6
    assert report.mse_trace[0] > report.final_mse


def test_realizable_target_starts_at_zero_loss():
    grid = GridSpec.square(21)
    truth = init_smp(10, dim=2, channels=1, sigma=0.3, r_init=0.4, seed=3)
    target = target_from_filter(truth, grid)
    report, _ = fit_function(target, FitMode.MOVING, 10, TrainConfig(steps=5), init_filter=truth)
    assert report.mse_trace[0] == 0.0


def test_reported_mse_matches_rasterized_filter():
    target = make_target("radial_sine", 15)
    report, smp = fit_function(target, FitMode.MOVING, 20, TrainConfig(steps=30, seed=1))
    expected = np.mean((rasterize(smp, target.grid)[0] - target.values) ** 2)
    assert report.final_mse == pytest.approx(expected, rel=1e-12)
    assert report.final_mse == fit_mse(smp, target)
    assert report.steps == 30


def test_fit_is_deterministic():
    target = make_target("product_sine", 11)
    a, _ = fit_function(target, FitMode.MOVING, 12, TrainConfig(steps=20, seed=4))
    b, _ = fit_function(target, FitMode.MOVING, 12, TrainConfig(steps=20, seed=4))
    assert a.mse_trace == b.mse_trace
    assert a.final_mse == b.final_mse


def test_fixed_mode_keeps_positions():
    target = make_target("product_sine", 11)
    init = init_smp(12, dim=2, channels=1, sigma=0.3, r_init=0.3, seed=5, distribution="uniform")
    _, fixed = fit_function(target, FitMode.FIXED, 12, TrainConfig(steps=20), init_filter=init)
    np.testing.assert_array_equal(fixed.positions, init.positions)
    assert not np.array_equal(fixed.radii, init.radii)
    _, frozen = fit_function(target, FitMode.FROZEN, 12, TrainConfig(steps=20), init_filter=init)
    np.testing.assert_array_equal(frozen.radii, init.radii)


def test_fit_rejects_mismatched_init_filter():
    with pytest.raises(ContractError):
        fit_function(make_target("zero", 11), FitMode.MOVING, 4, TrainConfig(steps=1), init_filter=init_smp(4, dim=1, channels=1, sigma=0.3))
    with pytest.raises(ContractError):
        fit_function(make_target("sine", 11, dim=1), FitMode.MOVING, 4, TrainConfig(steps=1), init_filter=init_smp(4, dim=2, channels=1, sigma=0.3))


def test_make_target_1d():
    target = make_target("sine_mix", 101, dim=1)
    assert target.values.shape == (101,)
    assert target.grid.domain == ((-1.0, 1.0),)
    np.testing.assert_allclose(target.values, np.sin(3 * np.pi * target.grid.axis(0)) + 0.5 * np.cos(7 * np.pi * target.grid.axis(0)))
    assert make_target("zero", 7, dim=1).values.shape == (7,)
    with pytest.raises(ContractError):
        make_target("sine", 11, dim=2)
    with pytest.raises(ContractError):
        make_target("product_sine", 11, dim=1)


def test_fit_1d_reduces_loss():
    target = make_target("sine", 41, dim=1)
    report, smp = fit_function(target, FitMode.MOVING, 12, TrainConfig(steps=100, seed=2))
    assert smp.dim == 1
    assert report.final_mse < report.mse_trace[0]
    assert report.final_mse == fit_mse(smp, target)


def test_1d_realizable_target_starts_at_zero_loss():
    grid = GridSpec.square(33, dim=1)
    truth = init_smp(6, dim=1, channels=1, sigma=0.4, domain=grid.domain, r_init=0.3, seed=8)
    report, _ = fit_function(target_from_filter(truth, grid), FitMode.FIXED, 6, TrainConfig(steps=3), init_filter=truth)
    assert report.mse_trace[0] == 0.0


def test_write_fit_report(tmp_path):
    report, _ = fit_function(make_target("zero", 9), FitMode.MOVING, 4, TrainConfig(steps=3))
    trace, summary = write_fit_report(report, tmp_path)
    lines = trace.read_text().splitlines()
    assert lines[0] == "step,mse"
    assert len(lines) == 4
    assert float(lines[1].split(",")[1]) == report.mse_trace[0]
    assert summary.read_text().splitlines()[0] == "mode,n_points,seed,steps,final_mse"


@pytest.mark.slow
@pytest.mark.parametrize("name", ["product_sine", "radial_sine"])
def test_moving_points_beat_fixed_points(name):
    target = make_target(name)
    moving, fixed = [], []
    for seed in (0, 1, 2):
        cfg = TrainConfig(seed=seed, steps=1000)
        moving.append(fit_function(target, FitMode.MOVING, 204, cfg)[0].final_mse)
        fixed.append(fit_function(target, FitMode.FIXED, 204, cfg)[0].final_mse)
    assert np.median(moving) <= 0.75 * np.median(fixed)


@pytest.mark.slow
@pytest.mark.parametrize("name", ["sine", "sine_mix"])
def test_moving_points_beat_fixed_points_1d(name):
    target = make_target(name, 101, dim=1)
    moving, fixed = [], []
    for seed in (0, 1, 2):
        cfg = TrainConfig(seed=seed, steps=1000)
        moving.append(fit_function(target, FitMode.MOVING, 16, cfg, r_init=0.15)[0].final_mse)
        fixed.append(fit_function(target, FitMode.FIXED, 16, cfg, r_init=0.15)[0].final_mse)
    assert np.median(moving) < np.median(fixed)


# --- kernel images -----------------------------------------------------------------------------


def test_zero_kernel_exports_black_image(tmp_path):
    smp = SmpFilter(positions=[[0.0, 0.0]], weights=[[0.0]], radii=[0.5])
    image_path, _ = export_kernel_image(smp, GridSpec.square(9), tmp_path / "kernel.pgm")
    image = np.asarray(Image.open(image_path))
    assert image.shape == (9, 9)
    assert not image.any()


def test_single_point_is_brightest_pixel(tmp_path):
    smp = SmpFilter(positions=[[0.5, -0.5]], weights=[[-2.0]], radii=[0.3])
    grid = GridSpec.square(9)
    image = np.asarray(Image.open(export_kernel_image(smp, grid, tmp_path / "kernel.pgm")[0]))
    assert image.max() == 255
    assert np.unravel_index(np.argmax(image), image.shape) == (6, 2)


def test_kernel_image_scaling():
    np.testing.assert_array_equal(kernel_image(np.array([[0.0, -1.0], [0.5, 2.0]])), [[0, 128], [64, 255]])


def test_point_overlay_round_trips(tmp_path):
    smp = init_smp(16, dim=2, channels=2, sigma=0.3, seed=6)
    _, points_path = export_kernel_image(smp, GridSpec.square(17), tmp_path / "k.pgm", channel=1)
    assert points_path.name == "k_points.csv"
    with points_path.open() as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 16
    np.testing.assert_array_equal([[float(r["x0"]), float(r["x1"])] for r in rows], smp.positions)
    np.testing.assert_array_equal([float(r["radius"]) for r in rows], smp.radii)


def test_export_rejects_bad_channel(tmp_path):
    smp = init_smp(4, dim=2, channels=1, sigma=0.3)
    with pytest.raises(ContractError):
        export_kernel_image(smp, GridSpec.square(9), tmp_path / "k.pgm", channel=1)


def test_run_seeds_keeps_order():
    assert run_seeds(math.factorial, [3, 1, 2]) == [6, 1, 2]
    assert run_seeds(math.factorial, [3, 1, 2], jobs=2) == [6, 1, 2]
