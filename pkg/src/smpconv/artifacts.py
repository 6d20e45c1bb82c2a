"""Checkpoint, CSV, JSON and graymap I/O. Every failure surfaces the offending path."""

import csv
import json
import logging
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from PIL import Image
from pydantic import ValidationError

from smpconv.errors import ArtifactError, CheckpointError
from smpconv.models.experiment_models import TrainedSequenceModel
from smpconv.models.smp_models import CheckpointDocument, SmpFilter

logger = logging.getLogger(__name__)


def fmt(value) -> str:
    """Shortest round-trip text for a float, plain text otherwise."""
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def _prepare(path: Path) -> Path:
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
    except OSError as e:
        raise ArtifactError(path.parent, f"cannot create directory ({e.strerror or e})") from e
    return path


def save_checkpoint(smp: SmpFilter, path) -> Path:
    path = _prepare(path)
    doc = CheckpointDocument.from_filter(smp)
    try:
        path.write_text(json.dumps(doc.model_dump(), indent=2) + "\n")
    except OSError as e:
        raise ArtifactError(path, f"cannot write checkpoint ({e.strerror or e})") from e
    logger.info(f"Saved checkpoint with {smp.n_points} points to {path}")
    return path


def load_checkpoint(path) -> SmpFilter:
    """Read and validate a checkpoint; every SmpFilter invariant is re-checked."""
    path = Path(path)
    try:
        text = path.read_text()
    except FileNotFoundError as e:
        raise CheckpointError(path, "file not found") from e
    except OSError as e:
        raise CheckpointError(path, e.strerror or str(e)) from e
    try:
        return CheckpointDocument.model_validate_json(text).to_filter()
    except ValidationError as e:
        raise CheckpointError(path, str(e)) from e


def write_csv(path, header: Sequence[str], rows: Iterable[Sequence]) -> Path:
    path = _prepare(path)
    try:
        with path.open("w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(header)
            for row in rows:
                writer.writerow([fmt(v) for v in row])
    except OSError as e:
        raise ArtifactError(path, f"cannot write CSV ({e.strerror or e})") from e
    return path


def write_pgm(path, image: np.ndarray) -> Path:
    """Binary 8-bit portable graymap; rows of `image` become image rows."""
    if image.ndim != 2 or image.dtype != np.uint8:
        raise ValueError(f"graymap needs a 2D uint8 array, got {image.dtype} {image.shape}")
    path = _prepare(path)
    try:
        Image.fromarray(image).save(path, format="PPM")
    except OSError as e:
        raise ArtifactError(path, f"cannot write graymap ({e.strerror or e})") from e
    return path


def write_json(path, payload) -> Path:
    path = _prepare(path)
    try:
        path.write_text(json.dumps(payload, indent=2) + "\n")
    except OSError as e:
        raise ArtifactError(path, f"cannot write JSON ({e.strerror or e})") from e
    return path


def read_json(path):
    path = Path(path)
    try:
        return json.loads(path.read_text())
    except OSError as e:
        raise ArtifactError(path, f"cannot read JSON ({e.strerror or e})") from e
    except json.JSONDecodeError as e:
        raise ArtifactError(path, f"not valid JSON ({e})") from e


def save_sequence_model(model: TrainedSequenceModel, directory) -> list[Path]:
    """One checkpoint per filter (`layer1_filter0.json`, ...) plus `head.json` with the readout."""
    directory = Path(directory)
    paths = []
    for layer, filters in (("layer1", model.layer1), ("layer2", model.layer2)):
        for i, smp in enumerate(filters):
            paths.append(save_checkpoint(smp, directory / f"{layer}_filter{i}.json"))
    paths.append(write_json(directory / "head.json", {"readout": model.readout.tolist(), "bias": float(model.bias)}))
    return paths
