import logging
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from smpconv.errors import ContractError, NonFiniteGradientError
from smpconv.models.smp_models import RADIUS_MAX, RADIUS_MIN, SmpFilter, SmpGradients
from smpconv.models.train_models import OptimizerKind, OptimizerState, TrainConfig

logger = logging.getLogger(__name__)

_MAX_REJECTION_ROUNDS = 10_000


def radius_for_kernel(k: int, dim: int) -> float:
    """Initial radius (2 / k) * d for a kernel of width k."""
    return 2.0 / k * dim


def default_domain(dim: int) -> Tuple[Tuple[float, float], ...]:
    # 1D kernels are causal by default
    if dim == 1:
        return ((-1.0, 0.0),)
    return ((-1.0, 1.0),) * dim


def _truncated_gaussian(rng: np.random.Generator, n: int, sigma: float, domain: Sequence[Tuple[float, float]]) -> np.ndarray:
    lo = np.array([d[0] for d in domain])
    hi = np.array([d[1] for d in domain])
    accepted: List[np.ndarray] = []
    have = 0
    for _ in range(_MAX_REJECTION_ROUNDS):
        draw = rng.normal(0.0, sigma, size=(n, len(domain)))
        keep = draw[np.all((draw > lo) & (draw < hi), axis=1)]
        accepted.append(keep)
        have += keep.shape[0]
        if have >= n:
            return np.concatenate(accepted)[:n]
    raise ContractError(f"rejection sampling with sigma={sigma} rarely lands in {tuple(domain)}")


def init_smp(
    n_points: int,
    dim: int,
    channels: int,
    sigma: float,
    domain: Optional[Sequence[Tuple[float, float]]] = None,
    r_init: float = 0.1,
    seed: int = 0,
    radius_min: float = RADIUS_MIN,
    radius_max: float = RADIUS_MAX,
    distribution: str = "gaussian",
) -> SmpFilter:
    """Fresh filter: truncated zero-mean Gaussian positions, constant radii, N(0, 1/N_p) weights.

    `distribution="uniform"` spreads positions uniformly over the domain instead.
    """
    if n_points < 1 or channels < 1:
        raise ContractError(f"n_points and channels must be >= 1, got {n_points}, {channels}")
    if dim not in (1, 2):
        raise ContractError(f"dim must be 1 or 2, got {dim}")
    if not sigma > 0:
        raise ContractError(f"sigma must be positive, got {sigma}")
    if not radius_min <= r_init <= radius_max:
        raise ContractError(f"r_init={r_init} outside [{radius_min}, {radius_max}]")
    domain = tuple(domain) if domain is not None else default_domain(dim)
    if len(domain) != dim:
        raise ContractError(f"domain {domain} does not have {dim} intervals")
    rng = np.random.default_rng(seed)
    if distribution == "gaussian":
        positions = _truncated_gaussian(rng, n_points, sigma, domain)
    elif distribution == "uniform":
        lo = np.array([d[0] for d in domain])
        hi = np.array([d[1] for d in domain])
        positions = rng.uniform(lo, hi, size=(n_points, dim))
    else:
        raise ContractError(f"unknown position distribution '{distribution}'")
    weights = rng.standard_normal((n_points, channels)) / np.sqrt(n_points)
    radii = np.full(n_points, r_init)
    return SmpFilter(positions=positions, weights=weights, radii=radii, radius_min=radius_min, radius_max=radius_max)


def _check_finite(key: str, grad: np.ndarray) -> None:
    bad = int(np.count_nonzero(~np.isfinite(grad)))
    if bad:
        raise NonFiniteGradientError(key, bad)


def _update(key: str, param: np.ndarray, grad: np.ndarray, lr: float, decay: bool, config: TrainConfig, state: OptimizerState) -> np.ndarray:
    t = state.counts.get(key, 0) + 1
    state.counts[key] = t
    param = np.array(param, dtype=np.float64)
    grad = np.asarray(grad, dtype=np.float64)
    wd = config.weight_decay if decay else 0.0
    if config.optimizer_kind == OptimizerKind.ADAMW:
        param -= lr * wd * param
    elif wd:
        grad = grad + wd * param

    if config.optimizer_kind == OptimizerKind.SGD:
        if config.momentum:
            buf = state.first_moment.get(key)
            buf = grad.copy() if buf is None else config.momentum * buf + grad
            state.first_moment[key] = buf
            grad = buf
        return np.asarray(param - lr * grad)

    b1, b2 = config.betas
    m = state.first_moment.get(key, np.zeros_like(param))
    v = state.second_moment.get(key, np.zeros_like(param))
    m = b1 * m + (1 - b1) * grad
    v = b2 * v + (1 - b2) * grad * grad
    state.first_moment[key] = m
    state.second_moment[key] = v
    m_hat = m / (1 - b1**t)
    v_hat = v / (1 - b2**t)
    return np.asarray(param - lr * m_hat / (np.sqrt(v_hat) + config.eps))


def step(
    filters: List[SmpFilter],
    gradients: List[SmpGradients],
    config: TrainConfig,
    state: OptimizerState,
    prefix: str = "smp",
) -> Tuple[List[SmpFilter], OptimizerState]:
    """One optimizer update of a filter set, followed by radius projection.

    `state` is updated in place and returned. Frozen groups (train_positions / train_radii off)
    are left untouched, including their moment buffers.
    """
    if len(filters) != len(gradients):
        raise ContractError(f"{len(filters)} filters but {len(gradients)} gradients")
    for i, (smp, grad) in enumerate(zip(filters, gradients)):
        if not grad.congruent_with(smp):
            raise ContractError(f"gradient {i} is not shape-congruent with its filter")
        _check_finite(f"{prefix}{i}.positions", grad.d_positions)
        _check_finite(f"{prefix}{i}.weights", grad.d_weights)
        _check_finite(f"{prefix}{i}.radii", grad.d_radii)

    radius_lr = config.base_lr * config.radius_lr_scale
    updated = []
    for i, (smp, grad) in enumerate(zip(filters, gradients)):
        key = f"{prefix}{i}"
        positions = smp.positions
        if config.train_positions:
            positions = _update(f"{key}.positions", positions, grad.d_positions, config.base_lr, False, config, state)
        weights = _update(f"{key}.weights", smp.weights, grad.d_weights, config.base_lr, True, config, state)
        radii = smp.radii
        if config.train_radii:
            radii = _update(f"{key}.radii", radii, grad.d_radii, radius_lr, False, config, state)
        radii = np.clip(radii, config.radius_min, config.radius_max)
        updated.append(smp.with_params(positions=positions, weights=weights, radii=radii, radius_min=config.radius_min, radius_max=config.radius_max))
    return updated, state


def step_dense(
    params: Dict[str, np.ndarray],
    grads: Dict[str, np.ndarray],
    config: TrainConfig,
    state: OptimizerState,
) -> Dict[str, np.ndarray]:
    """Update plain arrays (readouts, dense kernels) with the same rule; all of them count as weights."""
    for key, grad in grads.items():
        if key not in params or np.shape(grad) != np.shape(params[key]):
            raise ContractError(f"gradient '{key}' has no matching parameter")
        _check_finite(key, grad)
    return {key: _update(key, value, grads[key], config.base_lr, True, config, state) if key in grads else value for key, value in params.items()}
