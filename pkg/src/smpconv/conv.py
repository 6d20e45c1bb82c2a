"""Convolution layers built from rasterized SMP kernels.

Conventions:
- Convolution is cross-correlation (no kernel flip).
- 1D kernels are stored in grid orientation: tap K-1 (coordinate 0 of a causal grid) is lag 0,
  tap 0 is lag K-1. `as_lags` converts to lag order.
- Inputs may carry any number of leading batch axes: (..., C, L) in 1D, (..., C, H, W) in 2D.
"""

import logging
from typing import Callable, List

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from smpconv.errors import ContractError
from smpconv.models.conv_models import ConvLayerSpec, PositionSharing
from smpconv.models.smp_models import GridSpec, KernelTensor, SmpGradients
from smpconv.smp import rasterize, rasterize_with_vjp

logger = logging.getLogger(__name__)


def _batched(x: np.ndarray, core_ndim: int) -> tuple[np.ndarray, tuple[int, ...]]:
    if x.ndim < core_ndim:
        raise ContractError(f"expected at least {core_ndim} axes, got shape {x.shape}")
    lead = x.shape[: x.ndim - core_ndim]
    return x.reshape((-1,) + x.shape[x.ndim - core_ndim :]), lead


def as_lags(taps: np.ndarray) -> np.ndarray:
    return taps[..., ::-1]


def fft_size(length: int, kernel_length: int) -> int:
    """Smallest power of two holding the full linear convolution."""
    return 1 << (length + kernel_length - 2).bit_length()


# --- layer kernels ---------------------------------------------------------


def layer_kernel(layer: ConvLayerSpec, grid: GridSpec) -> KernelTensor:
    """Stack of rasterized filters, (n_filters, channels, *extent)."""
    return np.stack([rasterize(f, grid) for f in layer.filters])


def layer_kernel_with_vjp(layer: ConvLayerSpec, grid: GridSpec) -> tuple[KernelTensor, Callable[[np.ndarray], List[SmpGradients]]]:
    pairs = [rasterize_with_vjp(f, grid) for f in layer.filters]
    kernel = np.stack([k for k, _ in pairs])

    def vjp(upstream: np.ndarray) -> List[SmpGradients]:
        if upstream.shape != kernel.shape:
            raise ContractError(f"kernel cotangent shape {upstream.shape} does not match kernel {kernel.shape}")
        grads = [fn(upstream[i]) for i, (_, fn) in enumerate(pairs)]
        return share_layer_gradients(layer, grads)

    return kernel, vjp


def layer_kernel_backward(layer: ConvLayerSpec, grid: GridSpec, upstream: np.ndarray) -> List[SmpGradients]:
    _, vjp = layer_kernel_with_vjp(layer, grid)
    return vjp(np.asarray(upstream, dtype=np.float64))


def share_layer_gradients(layer: ConvLayerSpec, grads: List[SmpGradients]) -> List[SmpGradients]:
    """With layer-level sharing every filter receives the summed position and radius gradient.

    Identical gradients keep the shared parameters identical through any elementwise optimizer.
    """
    if layer.position_sharing != PositionSharing.LAYER:
        return grads
    d_positions = np.sum([g.d_positions for g in grads], axis=0)
    d_radii = np.sum([g.d_radii for g in grads], axis=0)
    return [SmpGradients(d_positions=d_positions.copy(), d_weights=g.d_weights, d_radii=d_radii.copy()) for g in grads]


def depthwise_slices(kernel: np.ndarray) -> np.ndarray:
    """(n_filters, channels, *extent) -> (C, *extent) for depthwise application."""
    if kernel.shape[0] == 1:
        return kernel[0]
    if kernel.shape[1] == 1:
        return kernel[:, 0]
    raise ContractError(f"depthwise kernels need one filter or one channel per filter, got {kernel.shape[:2]}")


# --- 1D causal ---------------------------------------------------------------


def causal_conv1d_direct(signal: np.ndarray, taps: np.ndarray, depthwise: bool = False) -> np.ndarray:
    """Time-domain causal convolution, O(L*K). taps is (C_out, C_in, K), or (C, K) when depthwise."""
    x, lead = _batched(np.asarray(signal, dtype=np.float64), 2)
    lags = as_lags(np.asarray(taps, dtype=np.float64))
    length = x.shape[-1]
    if depthwise:
        if lags.shape[0] != x.shape[1]:
            raise ContractError(f"depthwise kernel has {lags.shape[0]} channels, signal has {x.shape[1]}")
        y = np.zeros_like(x)
        for j in range(min(lags.shape[-1], length)):
            y[:, :, j:] += lags[None, :, j, None] * x[:, :, : length - j]
    else:
        if lags.shape[1] != x.shape[1]:
            raise ContractError(f"kernel expects {lags.shape[1]} input channels, signal has {x.shape[1]}")
        y = np.zeros((x.shape[0], lags.shape[0], length))
        for j in range(min(lags.shape[-1], length)):
            y[:, :, j:] += np.einsum("oi,bit->bot", lags[:, :, j], x[:, :, : length - j])
    return y.reshape(lead + y.shape[1:])


def causal_conv1d_fft(signal: np.ndarray, taps: np.ndarray, depthwise: bool = False) -> np.ndarray:
    """Causal convolution through zero-padded real FFTs, truncated back to the signal length."""
    x, lead = _batched(np.asarray(signal, dtype=np.float64), 2)
    lags = as_lags(np.asarray(taps, dtype=np.float64))
    length = x.shape[-1]
    n = fft_size(length, lags.shape[-1])
    xf = np.fft.rfft(x, n=n)
    hf = np.fft.rfft(lags, n=n)
    if depthwise:
        if hf.shape[0] != x.shape[1]:
            raise ContractError(f"depthwise kernel has {hf.shape[0]} channels, signal has {x.shape[1]}")
        yf = xf * hf[None]
    else:
        if hf.shape[1] != x.shape[1]:
            raise ContractError(f"kernel expects {hf.shape[1]} input channels, signal has {x.shape[1]}")
        yf = np.einsum("bif,oif->bof", xf, hf)
    y = np.fft.irfft(yf, n=n)[..., :length]
    return y.reshape(lead + y.shape[1:])


def causal_conv1d_fft_backward(signal: np.ndarray, taps: np.ndarray, upstream: np.ndarray, depthwise: bool = False) -> tuple[np.ndarray, np.ndarray]:
    """Cotangents (d_signal, d_taps) of `causal_conv1d_fft`; batch axes are summed into d_taps."""
    x, lead = _batched(np.asarray(signal, dtype=np.float64), 2)
    dy, _ = _batched(np.asarray(upstream, dtype=np.float64), 2)
    taps = np.asarray(taps, dtype=np.float64)
    lags = as_lags(taps)
    length, k = x.shape[-1], lags.shape[-1]
    n = fft_size(length, k)
    xf = np.fft.rfft(x, n=n)
    hf = np.fft.rfft(lags, n=n)
    dyf = np.fft.rfft(dy, n=n)
    if depthwise:
        d_lags = np.fft.irfft(np.einsum("bcf,bcf->cf", np.conj(xf), dyf), n=n)[..., :k]
        dxf = np.conj(hf)[None] * dyf
    else:
        d_lags = np.fft.irfft(np.einsum("bif,bof->oif", np.conj(xf), dyf), n=n)[..., :k]
        dxf = np.einsum("oif,bof->bif", np.conj(hf), dyf)
    dx = np.fft.irfft(dxf, n=n)[..., :length]
    return dx.reshape(lead + dx.shape[1:]), as_lags(d_lags).copy()


def conv1d_causal_fft(signal: np.ndarray, layer: ConvLayerSpec, grid: GridSpec) -> np.ndarray:
    """Full-length causal SMP convolution; the small branch, if any, runs as its own causal convolution."""
    if not layer.causal:
        raise ContractError("conv1d_causal_fft requires a causal layer")
    if grid.dim != 1 or layer.dim != 1:
        raise ContractError("conv1d_causal_fft requires a 1D layer and grid")
    signal = np.asarray(signal, dtype=np.float64)
    if grid.extent[0] != signal.shape[-1]:
        raise ContractError(f"grid extent {grid.extent[0]} must equal signal length {signal.shape[-1]}")
    kernel = layer_kernel(layer, grid)
    if layer.depthwise:
        out = causal_conv1d_fft(signal, depthwise_slices(kernel), depthwise=True)
    else:
        out = causal_conv1d_fft(signal, kernel)
    if layer.small_branch is not None:
        small = depthwise_slices(layer.small_branch) if layer.depthwise else layer.small_branch
        out = out + causal_conv1d_direct(signal, small, depthwise=layer.depthwise)
    return out


# --- 2D direct -----------------------------------------------------------------


def _check_odd(kernel: np.ndarray) -> tuple[int, int]:
    kh, kw = kernel.shape[-2:]
    if kh % 2 == 0 or kw % 2 == 0:
        raise ContractError(f"'same' convolution needs odd kernel extents, got {kh}x{kw}")
    return kh, kw


def _windows(x: np.ndarray, kh: int, kw: int) -> np.ndarray:
    padded = np.pad(x, ((0, 0), (0, 0), (kh // 2, kh // 2), (kw // 2, kw // 2)))
    return sliding_window_view(padded, (kh, kw), axis=(-2, -1))


def conv2d_same(inputs: np.ndarray, kernel: np.ndarray, depthwise: bool = False) -> np.ndarray:
    """Zero-padded cross-correlation preserving H x W. kernel is (C_out, C_in, k, k), or (C, k, k) when depthwise."""
    x, lead = _batched(np.asarray(inputs, dtype=np.float64), 3)
    kernel = np.asarray(kernel, dtype=np.float64)
    kh, kw = _check_odd(kernel)
    channels_in = kernel.shape[0] if depthwise else kernel.shape[1]
    if channels_in != x.shape[1]:
        raise ContractError(f"kernel expects {channels_in} input channels, input has {x.shape[1]}")
    win = _windows(x, kh, kw)
    if depthwise:
        y = np.einsum("bchwij,cij->bchw", win, kernel, optimize=True)
    else:
        y = np.einsum("bchwij,ocij->bohw", win, kernel, optimize=True)
    return y.reshape(lead + y.shape[1:])


def conv2d_kernel_grad(inputs: np.ndarray, upstream: np.ndarray, kernel_shape: tuple[int, ...], depthwise: bool = False) -> np.ndarray:
    """Kernel cotangent of `conv2d_same`, summed over batch axes."""
    x, _ = _batched(np.asarray(inputs, dtype=np.float64), 3)
    dy, _ = _batched(np.asarray(upstream, dtype=np.float64), 3)
    kh, kw = kernel_shape[-2:]
    win = _windows(x, kh, kw)
    if depthwise:
        return np.einsum("bchwij,bchw->cij", win, dy, optimize=True)
    return np.einsum("bchwij,bohw->ocij", win, dy, optimize=True)


def conv2d_direct(inputs: np.ndarray, layer: ConvLayerSpec, grid: GridSpec, padding: str = "same") -> np.ndarray:
    if padding != "same":
        raise ContractError(f"only 'same' padding is supported, got '{padding}'")
    if layer.dim != 2 or grid.dim != 2:
        raise ContractError("conv2d_direct requires a 2D layer and grid")
    kernel = layer_kernel(layer, grid)
    _check_odd(kernel)
    if layer.depthwise:
        out = conv2d_same(inputs, depthwise_slices(kernel), depthwise=True)
    else:
        out = conv2d_same(inputs, kernel)
    if layer.small_branch is not None:
        small = depthwise_slices(layer.small_branch) if layer.depthwise else layer.small_branch
        out = out + conv2d_same(inputs, small, depthwise=layer.depthwise)
    return out


# --- reparameterization and accounting -------------------------------------------


def fuse_branches(large: KernelTensor, small: KernelTensor, dim: int = 2, causal: bool = False) -> KernelTensor:
    """Merge a small parallel kernel into a large one.

    The small kernel is zero-padded to the large extent and added, centered by default; with
    `causal=True` (1D only) it is aligned at lag 0, i.e. against the last tap.
    """
    large = np.asarray(large, dtype=np.float64)
    small = np.asarray(small, dtype=np.float64)
    if large.ndim != small.ndim or large.shape[: large.ndim - dim] != small.shape[: small.ndim - dim]:
        raise ContractError(f"branch shapes {large.shape} and {small.shape} disagree outside the {dim} spatial axes")
    if causal and dim != 1:
        raise ContractError("causal fusion is defined for 1D kernels only")
    pads = [(0, 0)] * (large.ndim - dim)
    for big, little in zip(large.shape[-dim:], small.shape[-dim:]):
        if little > big:
            raise ContractError(f"small extent {little} exceeds large extent {big}")
        if causal:
            pads.append((big - little, 0))
            continue
        if big % 2 == 0 or little % 2 == 0:
            raise ContractError(f"centered fusion needs odd extents, got {big} and {little}")
        offset = (big - little) // 2
        pads.append((offset, offset))
    return large + np.pad(small, pads)


def param_count(layer: ConvLayerSpec) -> int:
    """Learnable parameters: (1 + d + C) * N_p per filter, positions/radii once under layer sharing."""
    d, c = layer.dim, layer.channels
    if layer.position_sharing == PositionSharing.LAYER:
        n_p = layer.filters[0].n_points
        total = (1 + d) * n_p + layer.n_filters * c * n_p
    else:
        total = sum((1 + d + c) * f.n_points for f in layer.filters)
    if layer.small_branch is not None:
        total += layer.small_branch.size
    return total


def dense_param_count(channels: int, k: int, dim: int = 2) -> int:
    return channels * k**dim


def depthwise_points(k: int) -> int:
    """Point budget of the large-kernel depthwise recipe, floor(k^2 / 4)."""
    return k * k // 4
