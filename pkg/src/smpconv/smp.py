"""Self-moving point evaluation: distance cone, neighborhoods, rasterization and analytic gradients.

A query x is covered by point i when g(x, p_i, r_i) = 1 - |x - p_i|_1 / r_i > 0. The SMP value at x is the
sum of g * w_i over covering points divided by the number of covering points, and exactly zero when no
point covers x.
"""

import logging
from typing import Callable, NamedTuple

import numpy as np

from smpconv.errors import ContractError, DomainError
from smpconv.models.smp_models import GridSpec, KernelTensor, SmpFilter, SmpGradients

logger = logging.getLogger(__name__)


class _Geometry(NamedTuple):
    g: np.ndarray  # (M, N), zero outside the neighborhood
    mask: np.ndarray  # (M, N) bool
    inv_count: np.ndarray  # (M,), zero where the neighborhood is empty
    rows: np.ndarray  # (P,) query index of each covered pair
    cols: np.ndarray  # (P,) point index of each covered pair
    sign: np.ndarray  # (P, d) sign(x - p)
    l1: np.ndarray  # (P,)


def _as_query(x, dim: int) -> np.ndarray:
    q = np.asarray(x, dtype=np.float64).reshape(-1)
    if q.shape[0] != dim:
        raise ContractError(f"query has {q.shape[0]} coordinates, filter expects {dim}")
    return q


def _geometry(smp: SmpFilter, queries: np.ndarray) -> _Geometry:
    l1 = np.zeros((queries.shape[0], smp.n_points))
    for k in range(smp.dim):
        l1 += np.abs(queries[:, k, None] - smp.positions[None, :, k])
    g = 1.0 - l1 / smp.radii[None, :]
    mask = g > 0.0
    np.maximum(g, 0.0, out=g)
    count = mask.sum(axis=1)
    inv_count = np.zeros(count.shape, dtype=np.float64)
    np.divide(1.0, count, out=inv_count, where=count > 0)
    # covered (query, point) pairs
    rows, cols = np.nonzero(mask)
    sign = np.sign(queries[rows] - smp.positions[cols])
    return _Geometry(g=g, mask=mask, inv_count=inv_count, rows=rows, cols=cols, sign=sign, l1=l1[rows, cols])


def distance_g(x, p, r: float) -> float:
    """L1 cone 1 - |x - p|_1 / r. Negative outside the point's reach."""
    if not r > 0:
        raise DomainError(f"radius must be positive, got {r}")
    x = np.asarray(x, dtype=np.float64).reshape(-1)
    p = np.asarray(p, dtype=np.float64).reshape(-1)
    if x.shape != p.shape:
        raise ContractError(f"x and p differ in dimension: {x.shape[0]} vs {p.shape[0]}")
    return float(1.0 - np.abs(x - p).sum() / r)


def neighborhood(x, smp: SmpFilter) -> frozenset[int]:
    """Indices i with g(x, p_i, r_i) strictly positive."""
    q = _as_query(x, smp.dim)
    geo = _geometry(smp, q[None, :])
    return frozenset(int(i) for i in np.flatnonzero(geo.mask[0]))


def evaluate_smp(x, smp: SmpFilter) -> np.ndarray:
    """SMP value at one coordinate, shape (channels,)."""
    q = _as_query(x, smp.dim)
    return _evaluate(smp, q[None, :])[0]


def _evaluate(smp: SmpFilter, queries: np.ndarray, geo: _Geometry | None = None) -> np.ndarray:
    if geo is None:
        geo = _geometry(smp, queries)
    return (geo.g @ smp.weights) * geo.inv_count[:, None]


def _check_grid(smp: SmpFilter, grid: GridSpec) -> None:
    if grid.dim != smp.dim:
        raise ContractError(f"grid dimension {grid.dim} does not match filter dimension {smp.dim}")


def rasterize(smp: SmpFilter, grid: GridSpec) -> KernelTensor:
    """Sample the SMP on every grid coordinate; returns (channels, *extent)."""
    _check_grid(smp, grid)
    values = _evaluate(smp, grid.coordinates)
    return values.T.reshape((smp.channels,) + tuple(grid.extent))


def _backward(smp: SmpFilter, geo: _Geometry, upstream: np.ndarray) -> SmpGradients:
    # upstream is (M, C); |N(x)| is held constant
    scaled = geo.g * geo.inv_count[:, None]
    d_weights = scaled.T @ upstream
    n = smp.n_points
    coef = np.einsum("pc,pc->p", upstream[geo.rows], smp.weights[geo.cols]) * geo.inv_count[geo.rows]
    d_positions = np.stack([np.bincount(geo.cols, coef * geo.sign[:, k], minlength=n) for k in range(smp.dim)], axis=1)
    d_positions /= smp.radii[:, None]
    d_radii = np.bincount(geo.cols, coef * geo.l1, minlength=n) / smp.radii**2
    return SmpGradients(d_positions=d_positions, d_weights=d_weights, d_radii=d_radii)


def _flatten_upstream(smp: SmpFilter, grid: GridSpec, upstream) -> np.ndarray:
    expected = (smp.channels,) + tuple(grid.extent)
    u = np.asarray(upstream, dtype=np.float64)
    if u.shape != expected:
        raise ContractError(f"upstream shape {u.shape} does not match kernel shape {expected}")
    return u.reshape(smp.channels, -1).T


def smp_backward(smp: SmpFilter, grid: GridSpec, upstream) -> SmpGradients:
    """Vector-Jacobian product of `rasterize` with respect to positions, weights and radii."""
    _check_grid(smp, grid)
    if np.any(smp.radii < smp.radius_min):
        raise ContractError(f"radii below radius_min={smp.radius_min}")
    u = _flatten_upstream(smp, grid, upstream)
    return _backward(smp, _geometry(smp, grid.coordinates), u)


def rasterize_with_vjp(smp: SmpFilter, grid: GridSpec) -> tuple[KernelTensor, Callable[[np.ndarray], SmpGradients]]:
    """Rasterize once and return a backward closure that reuses the query geometry."""
    _check_grid(smp, grid)
    geo = _geometry(smp, grid.coordinates)
    kernel = _evaluate(smp, grid.coordinates, geo).T.reshape((smp.channels,) + tuple(grid.extent))

    def vjp(upstream: np.ndarray) -> SmpGradients:
        return _backward(smp, geo, _flatten_upstream(smp, grid, upstream))

    return kernel, vjp


def lipschitz_bound(smp: SmpFilter) -> float:
    """Upper bound L with |SMP(x) - SMP(y)|_inf <= L * |x - y|_1."""
    return float(np.sum(np.abs(smp.weights).max(axis=1) / smp.radii))
