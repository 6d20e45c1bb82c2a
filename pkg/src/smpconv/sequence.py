"""Synthetic long-range task: classify the sign of the first element of a white-noise sequence.

Both models read the last timestep of a two-layer causal convolution stack, so only a receptive
field spanning the whole sequence can see the label. The SMP model rasterizes full-length kernels;
the dense baseline uses short kernels trained the same way.
"""

import logging
import time
from pathlib import Path
from typing import Callable, Dict, List, Optional, Tuple

import numpy as np

from smpconv.artifacts import read_json, save_sequence_model, write_json
from smpconv.conv import causal_conv1d_fft, causal_conv1d_fft_backward, layer_kernel_with_vjp
from smpconv.errors import ArtifactError, DivergenceError, ReferenceMismatchError
from smpconv.models.conv_models import ConvLayerSpec
from smpconv.models.experiment_models import SequenceReport, SequenceResult, SequenceTaskConfig, TrainedSequenceModel
from smpconv.models.smp_models import GridSpec
from smpconv.models.train_models import OptimizerState
from smpconv.optim import init_smp, step, step_dense

logger = logging.getLogger(__name__)


def make_dataset(config: SequenceTaskConfig, seed: int) -> Tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    rng = np.random.default_rng(seed)
    x_train = rng.standard_normal((config.n_train, 1, config.length))
    x_test = rng.standard_normal((config.n_test, 1, config.length))
    y_train = (x_train[:, 0, 0] > 0).astype(np.float64)
    y_test = (x_test[:, 0, 0] > 0).astype(np.float64)
    if config.shuffle_labels:
        y_train = rng.permutation(y_train)
    return x_train, y_train, x_test, y_test


def _bce(logits: np.ndarray, labels: np.ndarray) -> Tuple[float, np.ndarray]:
    loss = float(np.mean(np.logaddexp(0.0, logits) - labels * logits))
    probs = 0.5 * (1.0 + np.tanh(0.5 * logits))
    return loss, (probs - labels) / labels.shape[0]


def _head(z2: np.ndarray, readout: np.ndarray, bias: np.ndarray) -> Tuple[np.ndarray, Callable]:
    features = z2[:, :, -1]
    logits = features @ readout + bias

    def backward(dlogits: np.ndarray):
        dz2 = np.zeros_like(z2)
        dz2[:, :, -1] = np.outer(dlogits, readout)
        return dz2, features.T @ dlogits, np.sum(dlogits)

    return logits, backward


def _two_layer(x: np.ndarray, taps1: np.ndarray, taps2: np.ndarray, readout: np.ndarray, bias: np.ndarray):
    """Forward pass shared by both models; returns logits and a backward closure over tap cotangents."""
    z1 = causal_conv1d_fft(x, taps1)
    a1 = np.tanh(z1)
    z2 = causal_conv1d_fft(a1, taps2)
    logits, head_backward = _head(z2, readout, bias)

    def backward(dlogits: np.ndarray):
        dz2, d_readout, d_bias = head_backward(dlogits)
        da1, d_taps2 = causal_conv1d_fft_backward(a1, taps2, dz2)
        dz1 = da1 * (1.0 - a1 * a1)
        _, d_taps1 = causal_conv1d_fft_backward(x, taps1, dz1)
        return d_taps1, d_taps2, d_readout, d_bias

    return logits, backward


def _init_head(rng: np.random.Generator, hidden: int) -> Dict[str, np.ndarray]:
    return {"readout": rng.standard_normal(hidden) / np.sqrt(hidden), "bias": np.zeros(())}


def _batches(rng: np.random.Generator, n: int, batch_size: int):
    while True:
        order = rng.permutation(n)
        for start in range(0, n, batch_size):
            yield order[start : start + batch_size]


def _accuracy(logits: np.ndarray, labels: np.ndarray) -> float:
    return float(np.mean((logits > 0) == (labels > 0.5)))


def train_smp_classifier(config: SequenceTaskConfig, seed: int, data) -> Tuple[TrainedSequenceModel, float, float]:
    x_train, y_train, x_test, y_test = data
    cfg = config.train.model_copy(update={"seed": seed})
    grid = GridSpec.causal(config.length)
    h = config.hidden_channels

    def filters(channels: int, offset: int):
        return [
            init_smp(
                config.n_points,
                dim=1,
                channels=channels,
                sigma=config.sigma,
                r_init=config.r_init,
                seed=seed * 1000 + offset + i,
                radius_min=cfg.radius_min,
                radius_max=cfg.radius_max,
            )
            for i in range(h)
        ]

    layer1 = ConvLayerSpec(filters=filters(1, 0), causal=True)
    layer2 = ConvLayerSpec(filters=filters(h, 100), causal=True)
    rng = np.random.default_rng(seed)
    head = _init_head(rng, h)
    state = OptimizerState()

    def forward(x: np.ndarray, l1: ConvLayerSpec, l2: ConvLayerSpec, params: Dict[str, np.ndarray]):
        taps1, vjp1 = layer_kernel_with_vjp(l1, grid)
        taps2, vjp2 = layer_kernel_with_vjp(l2, grid)
        logits, backward = _two_layer(x, taps1, taps2, params["readout"], params["bias"])
        return logits, backward, vjp1, vjp2

    batches = _batches(rng, config.n_train, config.batch_size)
    for i in range(cfg.steps):
        idx = next(batches)
        logits, backward, vjp1, vjp2 = forward(x_train[idx], layer1, layer2, head)
        loss, dlogits = _bce(logits, y_train[idx])
        if not np.isfinite(loss):
            raise DivergenceError(i, loss)
        d_taps1, d_taps2, d_readout, d_bias = backward(dlogits)
        new1, state = step(layer1.filters, vjp1(d_taps1), cfg, state, prefix="layer1.")
        new2, state = step(layer2.filters, vjp2(d_taps2), cfg, state, prefix="layer2.")
        layer1 = layer1.model_copy(update={"filters": new1})
        layer2 = layer2.model_copy(update={"filters": new2})
        head = step_dense(head, {"readout": d_readout, "bias": d_bias}, cfg, state)
        if i % cfg.log_every == 0:
            logger.info(f"sequence[smp] seed={seed} step {i}/{cfg.steps} loss={loss:.4f}")

    train_acc = _accuracy(forward(x_train, layer1, layer2, head)[0], y_train)
    test_acc = _accuracy(forward(x_test, layer1, layer2, head)[0], y_test)
    model = TrainedSequenceModel(layer1=layer1.filters, layer2=layer2.filters, readout=head["readout"], bias=head["bias"])
    return model, train_acc, test_acc


def train_dense_classifier(config: SequenceTaskConfig, seed: int, data) -> Tuple[float, float]:
    x_train, y_train, x_test, y_test = data
    cfg = config.train.model_copy(update={"seed": seed})
    h, k = config.hidden_channels, config.dense_kernel
    rng = np.random.default_rng(seed)
    params = {
        "taps1": rng.standard_normal((h, 1, k)) / np.sqrt(k),
        "taps2": rng.standard_normal((h, h, k)) / np.sqrt(h * k),
        **_init_head(rng, h),
    }
    state = OptimizerState()
    batches = _batches(rng, config.n_train, config.batch_size)
    for i in range(cfg.steps):
        idx = next(batches)
        logits, backward = _two_layer(x_train[idx], params["taps1"], params["taps2"], params["readout"], params["bias"])
        loss, dlogits = _bce(logits, y_train[idx])
        if not np.isfinite(loss):
            raise DivergenceError(i, loss)
        d_taps1, d_taps2, d_readout, d_bias = backward(dlogits)
        grads = {"taps1": d_taps1, "taps2": d_taps2, "readout": d_readout, "bias": np.asarray(d_bias)}
        params = step_dense(params, grads, cfg, state)
        if i % cfg.log_every == 0:
            logger.info(f"sequence[dense k={k}] seed={seed} step {i}/{cfg.steps} loss={loss:.4f}")

    def predict(x):
        return _two_layer(x, params["taps1"], params["taps2"], params["readout"], params["bias"])[0]

    return _accuracy(predict(x_train), y_train), _accuracy(predict(x_test), y_test)


def synth_sequence_task(config: SequenceTaskConfig, seeds: List[int] | None = None, model_dir: Optional[Path] = None) -> SequenceReport:
    """Train the full-length SMP classifier (and the short dense baseline) for each seed.

    With `model_dir`, the trained SMP classifier of each seed is saved under `model_dir/seed_<n>`.
    """
    seeds = [config.train.seed] if seeds is None else seeds
    started = time.perf_counter()
    results: List[SequenceResult] = []
    for seed in seeds:
        data = make_dataset(config, seed)
        model, train_acc, test_acc = train_smp_classifier(config, seed, data)
        if model_dir is not None:
            save_sequence_model(model, Path(model_dir) / f"seed_{seed}")
        results.append(SequenceResult(model="smp", seed=seed, train_accuracy=train_acc, test_accuracy=test_acc))
        logger.info(f"sequence[smp] seed={seed} train_acc={train_acc:.3f} test_acc={test_acc:.3f}")
        if config.include_baseline:
            train_acc, test_acc = train_dense_classifier(config, seed, data)
            results.append(SequenceResult(model=f"dense_k{config.dense_kernel}", seed=seed, train_accuracy=train_acc, test_accuracy=test_acc))
            logger.info(f"sequence[dense k={config.dense_kernel}] seed={seed} train_acc={train_acc:.3f} test_acc={test_acc:.3f}")
    return SequenceReport(results=results, wall_clock_s=time.perf_counter() - started)


def pin_reference(report: SequenceReport, path) -> List[str]:
    """Check test accuracies against a reference file, pinning (model, seed) entries it does not hold yet.

    Returns the keys pinned by this call; raises ReferenceMismatchError if a pinned accuracy differs.
    """
    path = Path(path)
    pinned = read_json(path) if path.exists() else {}
    if not isinstance(pinned, dict):
        raise ArtifactError(path, "reference must hold a JSON object")
    added, mismatches = [], []
    for r in report.results:
        key = f"{r.model}/seed_{r.seed}"
        if key not in pinned:
            pinned[key] = r.test_accuracy
            added.append(key)
        elif pinned[key] != r.test_accuracy:
            mismatches.append(f"{key} pinned {pinned[key]}, got {r.test_accuracy}")
    if mismatches:
        raise ReferenceMismatchError(path, mismatches)
    if added:
        write_json(path, pinned)
        logger.info(f"Pinned {', '.join(added)} in {path}")
    return added
