import json

import numpy as np
import pytest

from smpconv.artifacts import load_checkpoint
from smpconv.errors import ArtifactError, ReferenceMismatchError
from smpconv.models.experiment_models import SequenceReport, SequenceResult, SequenceTaskConfig
from smpconv.models.train_models import TrainConfig
from smpconv.sequence import make_dataset, pin_reference, synth_sequence_task


def tiny_config(**kwargs) -> SequenceTaskConfig:
    return SequenceTaskConfig(length=32, n_train=64, n_test=32, batch_size=16, n_points=8, train=TrainConfig(steps=5, log_every=1), **kwargs)


def test_dataset_labels_follow_first_element():
    x_train, y_train, x_test, y_test = make_dataset(tiny_config(), seed=0)
    assert x_train.shape == (64, 1, 32) and x_test.shape == (32, 1, 32)
    np.testing.assert_array_equal(y_train, x_train[:, 0, 0] > 0)
    np.testing.assert_array_equal(y_test, x_test[:, 0, 0] > 0)


def test_shuffled_labels_keep_class_balance():
    clean = make_dataset(tiny_config(), seed=1)[1]
    shuffled = make_dataset(tiny_config(shuffle_labels=True), seed=1)[1]
    assert shuffled.sum() == clean.sum()


def test_sequence_task_is_deterministic():
    a = synth_sequence_task(tiny_config(), seeds=[0])
    b = synth_sequence_task(tiny_config(), seeds=[0])
    assert [r.model_dump() for r in a.results] == [r.model_dump() for r in b.results]
    assert {r.model for r in a.results} == {"smp", "dense_k5"}


def test_baseline_can_be_skipped():
    report = synth_sequence_task(tiny_config(include_baseline=False), seeds=[0, 1])
    assert [(r.model, r.seed) for r in report.results] == [("smp", 0), ("smp", 1)]


@pytest.mark.slow
def test_full_length_kernels_solve_the_task():
    report = synth_sequence_task(SequenceTaskConfig(), seeds=[0, 1, 2])
    smp = [r.test_accuracy for r in report.results if r.model == "smp"]
    dense = [r.test_accuracy for r in report.results if r.model == "dense_k5"]
    assert np.median(smp) >= 0.9
    assert np.median(dense) <= 0.6


@pytest.mark.slow
def test_shuffled_labels_stay_at_chance():
    report = synth_sequence_task(SequenceTaskConfig(shuffle_labels=True, include_baseline=False), seeds=[0])
    assert report.accuracy("smp") == pytest.approx(0.5, abs=0.1)


def test_trained_models_are_saved_per_seed(tmp_path):
    synth_sequence_task(tiny_config(include_baseline=False, hidden_channels=3), seeds=[0, 2], model_dir=tmp_path)
    for seed in (0, 2):
        directory = tmp_path / f"seed_{seed}"
        layer1 = [load_checkpoint(directory / f"layer1_filter{i}.json") for i in range(3)]
        layer2 = [load_checkpoint(directory / f"layer2_filter{i}.json") for i in range(3)]
        assert all(f.dim == 1 and f.channels == 1 and f.n_points == 8 for f in layer1)
        assert all(f.channels == 3 for f in layer2)
        head = json.loads((directory / "head.json").read_text())
        assert len(head["readout"]) == 3 and isinstance(head["bias"], float)


def make_report(**accuracies) -> SequenceReport:
    results = [SequenceResult(model=model, seed=0, train_accuracy=1.0, test_accuracy=acc) for model, acc in accuracies.items()]
    return SequenceReport(results=results, wall_clock_s=0.0)


def test_pin_reference_pins_then_checks(tmp_path):
    path = tmp_path / "ref.json"
    assert pin_reference(make_report(smp=0.9375), path) == ["smp/seed_0"]
    assert json.loads(path.read_text()) == {"smp/seed_0": 0.9375}
    assert pin_reference(make_report(smp=0.9375), path) == []
    assert pin_reference(make_report(smp=0.9375, dense_k5=0.5), path) == ["dense_k5/seed_0"]
    with pytest.raises(ReferenceMismatchError) as info:
        pin_reference(make_report(smp=0.875), path)
    assert info.value.mismatches == ["smp/seed_0 pinned 0.9375, got 0.875"]
    assert json.loads(path.read_text()) == {"smp/seed_0": 0.9375, "dense_k5/seed_0": 0.5}


def test_pin_reference_rejects_non_object(tmp_path):
    path = tmp_path / "ref.json"
    path.write_text("[1, 2]")
    with pytest.raises(ArtifactError):
        pin_reference(make_report(smp=0.5), path)
