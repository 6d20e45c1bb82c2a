"""Function fitting with moving or fixed points, and kernel image export."""

import logging
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Callable, List, Optional, Sequence, Tuple, TypeVar

import numpy as np

from smpconv.artifacts import write_csv, write_pgm
from smpconv.errors import ContractError, DivergenceError
from smpconv.models.experiment_models import TARGET_DIMS, FitMode, FitReport, TargetFunction
from smpconv.models.smp_models import GridSpec, SmpFilter
from smpconv.models.train_models import OptimizerState, TrainConfig
from smpconv.optim import init_smp, step
from smpconv.smp import rasterize, rasterize_with_vjp

logger = logging.getLogger(__name__)

FIT_GRID = 51
FIT_POINTS = 204

T = TypeVar("T")


def _product_sine(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    return np.sin(4 * np.pi * x) * np.sin(4 * np.pi * y)


def _radial_sine(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    return np.sin(2 * np.pi * (x**2 + y**2) * 3)


def _sine(x: np.ndarray) -> np.ndarray:
    return np.sin(4 * np.pi * x)


def _sine_mix(x: np.ndarray) -> np.ndarray:
    return np.sin(3 * np.pi * x) + 0.5 * np.cos(7 * np.pi * x)


TARGETS: dict[str, Callable[..., np.ndarray]] = {
    "product_sine": _product_sine,
    "radial_sine": _radial_sine,
    "sine": _sine,
    "sine_mix": _sine_mix,
    "zero": lambda *axes: np.zeros_like(axes[0]),
}


def make_target(name: str, extent: int = FIT_GRID, dim: int = 2) -> TargetFunction:
    """Sample a named analytic target on an extent**dim grid over [-1, 1]**dim."""
    if name not in TARGETS:
        raise ContractError(f"unknown target '{name}', expected one of {sorted(TARGETS)}")
    if dim not in TARGET_DIMS[name]:
        raise ContractError(f"target '{name}' is not defined for dim={dim}")
    grid = GridSpec.square(extent, dim=dim)
    values = TARGETS[name](*grid.coordinates.T).reshape(grid.extent)
    return TargetFunction(name=name, grid=grid, values=values)


def target_from_filter(smp: SmpFilter, grid: GridSpec, channel: int = 0, name: str = "smp") -> TargetFunction:
    """A target that an SMP can represent exactly."""
    return TargetFunction(name=name, grid=grid, values=rasterize(smp, grid)[channel])


def _mode_config(mode: FitMode, config: TrainConfig) -> TrainConfig:
    if mode == FitMode.FIXED:
        return config.model_copy(update={"train_positions": False})
    if mode == FitMode.FROZEN:
        return config.model_copy(update={"train_positions": False, "train_radii": False})
    return config


def fit_mse(smp: SmpFilter, target: TargetFunction) -> float:
    return float(np.mean((rasterize(smp, target.grid)[0] - target.values) ** 2))


def fit_function(
    target: TargetFunction,
    mode: FitMode,
    n_points: int,
    config: TrainConfig,
    sigma: float = 0.3,
    r_init: float = 0.2,
    distribution: str = "uniform",
    init_filter: Optional[SmpFilter] = None,
) -> Tuple[FitReport, SmpFilter]:
    """Minimize the MSE between the rasterized SMP and the target samples.

    The trace holds the MSE before each update, so trace[0] is the loss of the initial filter;
    `final_mse` is the loss of the returned filter.
    """
    mode = FitMode(mode)
    cfg = _mode_config(mode, config)
    if init_filter is None:
        smp = init_smp(
            n_points,
            dim=target.grid.dim,
            channels=1,
            sigma=sigma,
            domain=target.grid.domain,
            r_init=r_init,
            seed=cfg.seed,
            radius_min=cfg.radius_min,
            radius_max=cfg.radius_max,
            distribution=distribution,
        )
    else:
        if init_filter.dim != target.grid.dim or init_filter.channels != 1:
            raise ContractError(f"function fitting needs a {target.grid.dim}D single-channel filter")
        smp = init_filter
    state = OptimizerState()
    trace: List[float] = []
    started = time.perf_counter()
    size = target.values.size
    for i in range(cfg.steps):
        kernel, vjp = rasterize_with_vjp(smp, target.grid)
        resid = kernel[0] - target.values
        mse = float(np.mean(resid**2))
        if not np.isfinite(mse):
            raise DivergenceError(i, mse)
        trace.append(mse)
        if i % cfg.log_every == 0:
            logger.info(f"fit[{mode.value}] step {i}/{cfg.steps} mse={mse:.6g}")
        grads = vjp((2.0 / size) * resid[None])
        (smp,), state = step([smp], [grads], cfg, state)
    final = fit_mse(smp, target)
    if not np.isfinite(final):
        raise DivergenceError(cfg.steps, final)
    elapsed = time.perf_counter() - started
    logger.info(f"fit[{mode.value}] done: {cfg.steps} steps, final mse={final:.6g}, {elapsed:.2f}s")
    report = FitReport(mode=mode, n_points=smp.n_points, seed=cfg.seed, mse_trace=trace, final_mse=final, wall_clock_s=elapsed)
    return report, smp


def write_fit_report(report: FitReport, out_dir: Path) -> Tuple[Path, Path]:
    trace = write_csv(out_dir / "fit_report.csv", ["step", "mse"], enumerate(report.mse_trace))
    summary = write_csv(
        out_dir / "fit_summary.csv",
        ["mode", "n_points", "seed", "steps", "final_mse"],
        [[report.mode.value, report.n_points, report.seed, report.steps, report.final_mse]],
    )
    return trace, summary


def kernel_image(kernel: np.ndarray) -> np.ndarray:
    """|kernel| normalized by its maximum into 8-bit gray; an all-zero kernel stays all zero."""
    mag = np.abs(kernel)
    peak = mag.max() if mag.size else 0.0
    if peak == 0:
        return np.zeros(kernel.shape, dtype=np.uint8)
    return np.rint(mag / peak * 255.0).astype(np.uint8)


def export_kernel_image(smp: SmpFilter, grid: GridSpec, path, channel: int = 0) -> Tuple[Path, Path]:
    """Write the rasterized kernel as a graymap and the point overlay as `<stem>_points.csv`."""
    if smp.dim != 2 or grid.dim != 2:
        raise ContractError("kernel images need a 2D filter and grid")
    if not 0 <= channel < smp.channels:
        raise ContractError(f"channel {channel} out of range for {smp.channels} channels")
    path = Path(path)
    image = kernel_image(rasterize(smp, grid)[channel])
    image_path = write_pgm(path, image)
    rows = [[i, p[0], p[1], r] for i, (p, r) in enumerate(zip(smp.positions, smp.radii))]
    points_path = write_csv(path.with_name(f"{path.stem}_points.csv"), ["index", "x0", "x1", "radius"], rows)
    logger.info(f"Exported {image.shape[0]}x{image.shape[1]} kernel image to {image_path}")
    return image_path, points_path


def run_seeds(fn: Callable[[int], T], seeds: Sequence[int], jobs: int = 1) -> List[T]:
    """Run independent seeds, in a process pool when jobs > 1; results keep the seed order."""
    if jobs <= 1 or len(seeds) <= 1:
        return [fn(s) for s in seeds]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, seeds))
