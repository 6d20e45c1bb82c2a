import json

import numpy as np
import pytest
from PIL import Image

from smpconv.artifacts import fmt, load_checkpoint, save_checkpoint, write_csv, write_pgm
from smpconv.errors import CheckpointError
from smpconv.models.smp_models import GridSpec
from smpconv.optim import init_smp
from smpconv.smp import rasterize


def test_checkpoint_round_trip_is_exact(tmp_path):
    smp = init_smp(16, dim=2, channels=3, sigma=0.3, seed=0)
    loaded = load_checkpoint(save_checkpoint(smp, tmp_path / "ckpt" / "smp.json"))
    np.testing.assert_array_equal(loaded.positions, smp.positions)
    np.testing.assert_array_equal(loaded.weights, smp.weights)
    np.testing.assert_array_equal(loaded.radii, smp.radii)
    grid = GridSpec.square(17)
    np.testing.assert_array_equal(rasterize(loaded, grid), rasterize(smp, grid))


def test_missing_checkpoint_names_path(tmp_path):
    path = tmp_path / "nope.json"
    with pytest.raises(CheckpointError) as exc:
        load_checkpoint(path)
    assert str(path) in str(exc.value)


@pytest.mark.parametrize(
    "mutate",
    [
        lambda d: d.update(radii=[0.0] * d["n_points"]),
        lambda d: d.update(n_points=d["n_points"] + 1),
        lambda d: d.update(extra_field=1),
        lambda d: d["positions"][0].append(0.0),
    ],
    ids=["zero-radius", "count", "unknown-key", "ragged"],
)
def test_invalid_checkpoint_is_rejected(tmp_path, mutate):
    path = save_checkpoint(init_smp(4, dim=2, channels=1, sigma=0.3), tmp_path / "smp.json")
    doc = json.loads(path.read_text())
    mutate(doc)
    path.write_text(json.dumps(doc))
    with pytest.raises(CheckpointError):
        load_checkpoint(path)


def test_truncated_checkpoint_is_rejected(tmp_path):
    path = tmp_path / "smp.json"
    path.write_text('{"dim": 2, "channels"')
    with pytest.raises(CheckpointError):
        load_checkpoint(path)


def test_fmt_round_trips_floats():
    value = 0.1 + 0.2
    assert float(fmt(value)) == value
    assert fmt(np.float64(1e-300)) == "1e-300"
    assert fmt(3) == "3"


def test_write_csv(tmp_path):
    path = write_csv(tmp_path / "a" / "b.csv", ["x", "y"], [[1, 0.5], [2, -0.25]])
    assert path.read_text() == "x,y\n1,0.5\n2,-0.25\n"


def test_pgm_is_binary_graymap(tmp_path):
    image = np.array([[9, 10, 13], [32, 0, 255]], dtype=np.uint8)
    path = write_pgm(tmp_path / "k.pgm", image)
    assert path.read_bytes().startswith(b"P5")
    with Image.open(path) as img:
        assert img.mode == "L"
        assert img.size == (3, 2)
        np.testing.assert_array_equal(np.asarray(img), image)


def test_write_pgm_requires_uint8(tmp_path):
    with pytest.raises(ValueError):
        write_pgm(tmp_path / "k.pgm", np.zeros((2, 2)))
