import logging
import time
from pathlib import Path
from typing import Callable, Dict, List, Sequence

import numpy as np

from smpconv.artifacts import write_csv
from smpconv.conv import (
    causal_conv1d_fft,
    causal_conv1d_fft_backward,
    conv2d_kernel_grad,
    conv2d_same,
    dense_param_count,
    depthwise_points,
    depthwise_slices,
    layer_kernel,
    layer_kernel_with_vjp,
    param_count,
)
from smpconv.errors import ContractError
from smpconv.models.conv_models import BenchConfig, BenchReport, ConvLayerSpec, PositionSharing, TimingRow
from smpconv.models.smp_models import GridSpec
from smpconv.optim import init_smp, radius_for_kernel

logger = logging.getLogger(__name__)

BENCH_COLUMNS = ["config_name", "kernel_extent", "n_points", "params", "median_ms", "p10_ms", "p90_ms"]

PRESETS: Dict[str, List[BenchConfig]] = {
    "default": [
        BenchConfig(name="smp2d_k33", dim=2, kernel_extent=33, n_points=16, in_channels=4, out_channels=4),
        BenchConfig(name="smp2d_k65", dim=2, kernel_extent=65, n_points=16, in_channels=4, out_channels=4),
        BenchConfig(name="dense2d_k33", kind="dense", dim=2, kernel_extent=33, in_channels=4, out_channels=4),
        BenchConfig(name="smp1d_L256", dim=1, kernel_extent=256, n_points=30, in_channels=4, out_channels=4),
    ],
    # depthwise stage kernels of the large-kernel recipe
    "replk": [
        BenchConfig(name=f"smp_dw_k{k}", dim=2, kernel_extent=k, n_points=depthwise_points(k), in_channels=16, out_channels=16, depthwise=True)
        for k in (31, 29, 27, 13)
    ],
}


def _grid(cfg: BenchConfig) -> GridSpec:
    return GridSpec.causal(cfg.kernel_extent) if cfg.dim == 1 else GridSpec.square(cfg.kernel_extent)


def build_layer(cfg: BenchConfig, seed: int = 0) -> ConvLayerSpec:
    """Deterministic SMP layer for a benchmark config."""
    r_init = min(radius_for_kernel(cfg.kernel_extent, cfg.dim), 1.0)
    sigma = 0.1 if cfg.dim == 1 else 0.05
    if cfg.depthwise:
        filters = [init_smp(cfg.n_points, cfg.dim, cfg.in_channels, sigma, r_init=r_init, seed=seed)]
    else:
        filters = [init_smp(cfg.n_points, cfg.dim, cfg.in_channels, sigma, r_init=r_init, seed=seed + i) for i in range(cfg.out_channels)]
        if cfg.position_sharing == PositionSharing.LAYER:
            filters = [f.with_params(positions=filters[0].positions, radii=filters[0].radii) for f in filters]
    return ConvLayerSpec(filters=filters, position_sharing=cfg.position_sharing, causal=cfg.dim == 1, depthwise=cfg.depthwise)


def _conv(cfg: BenchConfig, x: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    if cfg.dim == 1:
        return causal_conv1d_fft(x, kernel, depthwise=cfg.depthwise)
    return conv2d_same(x, kernel, depthwise=cfg.depthwise)


def _kernel_grad(cfg: BenchConfig, x: np.ndarray, kernel: np.ndarray, upstream: np.ndarray) -> np.ndarray:
    if cfg.dim == 1:
        return causal_conv1d_fft_backward(x, kernel, upstream, depthwise=cfg.depthwise)[1]
    return conv2d_kernel_grad(x, upstream, kernel.shape, depthwise=cfg.depthwise)


def _time(fn: Callable[[], object], repetitions: int) -> tuple[float, float, float]:
    times = []
    for _ in range(repetitions):
        started = time.perf_counter()
        fn()
        times.append((time.perf_counter() - started) * 1000.0)
    p10, median, p90 = np.percentile(times, [10, 50, 90])
    return float(median), float(p10), float(p90)


def _smp_workloads(cfg: BenchConfig, x: np.ndarray, seed: int):
    layer = build_layer(cfg, seed)
    grid = _grid(cfg)

    def slices(kernel):
        return depthwise_slices(kernel) if cfg.depthwise else kernel

    def forward():
        return _conv(cfg, x, slices(layer_kernel(layer, grid)))

    def forward_backward():
        kernel, vjp = layer_kernel_with_vjp(layer, grid)
        y = _conv(cfg, x, slices(kernel))
        d_kernel = _kernel_grad(cfg, x, slices(kernel), np.ones_like(y))
        return vjp(d_kernel.reshape(kernel.shape))

    return param_count(layer), {"forward": forward, "forward_backward": forward_backward}


def _dense_workloads(cfg: BenchConfig, x: np.ndarray, seed: int):
    rng = np.random.default_rng(seed)
    spatial = (cfg.kernel_extent,) * cfg.dim
    if cfg.depthwise:
        kernel = rng.standard_normal((cfg.in_channels,) + spatial)
        params = dense_param_count(cfg.in_channels, cfg.kernel_extent, cfg.dim)
    else:
        kernel = rng.standard_normal((cfg.out_channels, cfg.in_channels) + spatial)
        params = cfg.out_channels * dense_param_count(cfg.in_channels, cfg.kernel_extent, cfg.dim)
    return params, {"forward": lambda: _conv(cfg, x, kernel)}


def cpu_microbench(configs: Sequence[BenchConfig], input_shape: Sequence[int] = (32, 32), repetitions: int = 5, seed: int = 0) -> BenchReport:
    """Time each config on a fixed random input; 1D configs use a sequence of kernel_extent samples.

    `input_shape` is the spatial (H, W) of the 2D input.
    """
    if repetitions < 3:
        raise ContractError(f"repetitions must be >= 3, got {repetitions}")
    rng = np.random.default_rng(seed)
    rows: List[TimingRow] = []
    smp_params: Dict[tuple, set] = {}
    for cfg in configs:
        if cfg.dim == 1:
            x = rng.standard_normal((cfg.in_channels, cfg.kernel_extent))
        else:
            x = rng.standard_normal((cfg.in_channels,) + tuple(input_shape[-2:]))
        if cfg.kind == "smp":
            params, workloads = _smp_workloads(cfg, x, seed)
            key = (cfg.dim, cfg.n_points, cfg.in_channels, cfg.out_channels, cfg.depthwise, cfg.position_sharing)
            smp_params.setdefault(key, set()).add(params)
        else:
            params, workloads = _dense_workloads(cfg, x, seed)
        for label, fn in workloads.items():
            fn()  # warm-up
            median, p10, p90 = _time(fn, repetitions)
            rows.append(TimingRow(config_name=f"{cfg.name}/{label}", kernel_extent=cfg.kernel_extent, n_points=cfg.n_points, params=params, median_ms=median, p10_ms=p10, p90_ms=p90))
            logger.info(f"bench {cfg.name}/{label}: median {median:.3f} ms (p10 {p10:.3f}, p90 {p90:.3f}), params={params}")
    for key, counts in smp_params.items():
        if len(counts) != 1:
            raise ContractError(f"SMP parameter count changed with kernel extent for {key}: {sorted(counts)}")
    return BenchReport(rows=rows, repetitions=repetitions, input_shape=list(input_shape))


def write_bench_csv(report: BenchReport, path: Path) -> Path:
    return write_csv(path, BENCH_COLUMNS, ([getattr(row, c) for c in BENCH_COLUMNS] for row in report.rows))
