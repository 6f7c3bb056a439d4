"""Smoke tests for the python bindings."""

import math

import numpy as np
import pytest

import unialign


def test_synthetic_dataset_roundtrip(tmp_path):
    ds = unialign.generate_synthetic(classes=3, domains=2, samples_per_class_domain=4, seed=7)
    assert ds.num_classes == 3
    assert ds.num_domains == 2
    assert len(ds) == 24
    assert ds.domain_size(0) == 12
    assert sorted(set(ds.labels(0))) == [0, 1, 2]

    path = tmp_path / "ds.jsonl"
    unialign.save_dataset(str(path), ds)
    loaded = unialign.load_dataset(str(path))
    assert len(loaded) == len(ds)
    assert loaded.labels(1) == ds.labels(1)


def test_generator_determinism(tmp_path):
    a = unialign.generate_synthetic(2, 2, 3, seed=5)
    b = unialign.generate_synthetic(2, 2, 3, seed=5)
    pa, pb = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
    unialign.save_dataset(str(pa), a)
    unialign.save_dataset(str(pb), b)
    assert pa.read_bytes() == pb.read_bytes()


def test_alignment_losses():
    rng = np.random.default_rng(3)
    z = rng.normal(size=(6, 4))
    total, mean_term, cov_term = unialign.alignment_loss([z, z])
    assert total == pytest.approx(0.0, abs=1e-12)

    z2 = rng.normal(size=(5, 4))
    total, mean_term, cov_term = unialign.alignment_loss([z, z2])
    assert total == pytest.approx(mean_term + cov_term)
    assert mean_term >= 0.0 and cov_term >= 0.0

    # Hand value: S=2, D=1, means 0 and 2.
    value, grads = unialign.mean_alignment_loss([np.zeros((1, 1)), np.full((1, 1), 2.0)])
    assert value == pytest.approx(4.0)
    assert len(grads) == 2


def test_label_smoothing_and_cross_entropy():
    targets = unialign.smooth_labels([0], num_classes=2, epsilon=0.1)
    assert targets[0, 0] == pytest.approx(0.95)
    assert targets[0, 1] == pytest.approx(0.05)

    logits = np.array([[math.log(9.0), 0.0]])
    value, grad = unialign.smoothed_cross_entropy(logits, targets)
    assert value == pytest.approx(-0.95 * math.log(0.9) - 0.05 * math.log(0.1))
    assert grad.shape == logits.shape


def test_valley_search():
    trace = [1.0, 0.8, 0.9, 0.7, 0.75, 0.76, 0.77, 0.9, 1.0, 1.1]
    assert unialign.find_converge_epoch(trace, patience=3) == 4
    gamma = unialign.overfit_threshold(trace, t_s=4, patience=3, tolerance=1.1)
    assert gamma == pytest.approx(1.1 * (0.7 + 0.75 + 0.76) / 3.0)
    assert unialign.find_converge_epoch(list(range(20, 0, -1)), patience=10) is None
    assert unialign.find_overfit_epoch([0.7, 0.75, 0.76, 0.9, 0.9, 0.9], 1, 0.81, 2) == 4
    assert unialign.checkpoint_weight(0.5, 1.0, 0.01) == pytest.approx(math.exp(-50.0))


def test_metrics():
    labels = [0] * 50 + [1] * 50
    preds = [0] * 40 + [1] * 10 + [0] * 5 + [1] * 45
    m = unialign.compute_metrics(preds, labels, 2)
    assert m["accuracy"] == pytest.approx(0.85)
    assert m["accuracy_ovr"] == pytest.approx(0.85)


def test_jsd():
    rng = np.random.default_rng(11)
    a = rng.normal(size=(100, 3))
    assert unialign.jsd_divergence(a, a) < 1e-9
    b = rng.normal(loc=30.0, scale=0.01, size=(100, 3))
    assert unialign.jsd_divergence(a, b) == pytest.approx(math.log(2.0), abs=1e-3)


def test_tiny_experiment():
    ds = unialign.generate_synthetic(3, 3, 30, shift_magnitude=0.5, seed=9)
    report = unialign.run_experiment(
        ds,
        modes=["unialign", "standard"],
        config={
            "model.hidden_width": 12,
            "model.repr_dim": 6,
            "optimizer.learning_rate": 0.08,
            "optimizer.batch_per_domain": 8,
            "valley.converge_patience": 4,
            "valley.overfit_patience": 2,
            "valley.max_epochs": 10,
            "run.seed": 5,
        },
    )
    assert set(report["modes"]) == {"unialign", "standard"}
    for mode in report["modes"].values():
        assert len(mode["folds"]) == 3
        assert 0.0 <= mode["acc_avg"] <= 1.0
        fold_mean = sum(f["accuracy"] for f in mode["folds"]) / 3
        assert mode["acc_avg"] == pytest.approx(fold_mean)
