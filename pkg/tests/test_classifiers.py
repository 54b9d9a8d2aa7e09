import numpy as np
import pytest

from opad import classifiers, imagecore
from opad.classifiers import (Dataset, LinearClassifier, LossSpec,
                              MlpClassifier, accuracy, grad_input, loss,
                              predict, synth_dataset, train)


def small_mlp(seed=0, h=4, w=4, k=3, hidden=8):
    rng = np.random.default_rng(seed)
    dim = h * w * 3
    layers = [(rng.standard_normal((hidden, dim)) * 0.3,
               rng.standard_normal(hidden) * 0.1),
              (rng.standard_normal((k, hidden)) * 0.3,
               rng.standard_normal(k) * 0.1)]
    return MlpClassifier((h, w, 3), layers)


def test_linear_predict_all_ones():
    clf = LinearClassifier(np.ones((2, 2, 3)))
    label, margin = predict(clf, imagecore.uniform(2, 2, 0.5))
    assert label == 1
    assert margin == pytest.approx(0.5 * 12)


def test_linear_tie_breaks_positive():
    weights = np.ones((1, 1, 3))
    weights[0, 0] = [1.0, -1.0, 0.0]
    clf = LinearClassifier(weights)
    label, margin = predict(clf, imagecore.uniform(1, 1, 0.3))
    assert margin == pytest.approx(0.0)
    assert label == 1


def test_mlp_zero_weights_ties_to_class_zero():
    layers = [(np.zeros((4, 12)), np.zeros(4)), (np.zeros((3, 4)), np.zeros(3))]
    clf = MlpClassifier((2, 2, 3), layers)
    label, scores = predict(clf, imagecore.uniform(2, 2, 0.7))
    assert label == 0
    assert np.all(scores == 0.0)
    spec = LossSpec("targeted", 1)
    assert np.array_equal(grad_input(clf, imagecore.uniform(2, 2, 0.7), spec),
                          np.zeros((2, 2, 3)))


def test_mlp_argmax_matches_bruteforce():
    clf = small_mlp(1)
    rng = np.random.default_rng(1)
    for _ in range(10):
        img = rng.uniform(0, 1, (4, 4, 3))
        label, scores = predict(clf, img)
        assert label == max(range(len(scores)), key=lambda i: scores[i])


def test_targeted_loss_increase_moves_toward_target():
    # the attack maximizes the loss, so ascending it must approach the target
    clf = small_mlp(2)
    rng = np.random.default_rng(2)
    img = rng.uniform(0.2, 0.8, (4, 4, 3))
    spec = LossSpec("targeted", 2)
    for _ in range(200):
        img = np.clip(img + 0.05 * grad_input(clf, img, spec), 0, 1)
    label, _ = predict(clf, img)
    assert label == 2


def test_linear_loss_signs():
    weights = np.ones((1, 1, 3)) / 3.0
    clf = LinearClassifier(weights)
    img = imagecore.uniform(1, 1, 0.9)  # margin +0.9
    # pushing toward target -1 means the maximized quantity starts negative
    assert loss(clf, img, LossSpec("targeted", -1)) == pytest.approx(-0.9)
    assert loss(clf, img, LossSpec("targeted", 1)) == pytest.approx(0.9)
    # untargeted: moving away from true label +1 raises the loss
    assert loss(clf, img, LossSpec("untargeted", 1)) == pytest.approx(-0.9)
    grad = grad_input(clf, img, LossSpec("targeted", -1))
    assert np.allclose(grad, -weights)


def test_mlp_uniform_scores_targeted_loss():
    layers = [(np.zeros((4, 12)), np.zeros(4)), (np.zeros((4, 4)), np.zeros(4))]
    clf = MlpClassifier((2, 2, 3), layers)
    value = loss(clf, imagecore.uniform(2, 2, 0.5), LossSpec("targeted", 3))
    assert value == pytest.approx(-np.log(4.0))


def test_loss_label_validation():
    clf = small_mlp(3)
    with pytest.raises(ValueError):
        loss(clf, imagecore.uniform(4, 4, 0.5), LossSpec("targeted", 7))
    lin = LinearClassifier(np.ones((1, 1, 3)))
    with pytest.raises(ValueError):
        loss(lin, imagecore.uniform(1, 1, 0.5), LossSpec("targeted", 0))
    with pytest.raises(ValueError):
        LossSpec("sideways", 1)


def test_gradients_match_finite_differences():
    rng = np.random.default_rng(4)
    cases = [
        (small_mlp(4), LossSpec("targeted", 1)),
        (small_mlp(5), LossSpec("untargeted", 0)),
        (LinearClassifier(rng.uniform(-1, 1, (4, 4, 3))), LossSpec("targeted", -1)),
    ]
    h = 1e-4
    for clf, spec in cases:
        img = rng.uniform(0.1, 0.9, (4, 4, 3))
        grad = grad_input(clf, img, spec)
        for _ in range(60):
            idx = tuple(rng.integers(0, s) for s in img.shape)
            plus, minus = img.copy(), img.copy()
            plus[idx] += h
            minus[idx] -= h
            fd = (loss(clf, plus, spec) - loss(clf, minus, spec)) / (2 * h)
            denom = max(abs(grad[idx]), abs(fd), 1e-10)
            assert abs(grad[idx] - fd) / denom <= 1e-4


def test_loss_increases_along_gradient():
    rng = np.random.default_rng(6)
    clf = small_mlp(6)
    spec = LossSpec("targeted", 0)
    for _ in range(10):
        img = rng.uniform(0.2, 0.8, (4, 4, 3))
        grad = grad_input(clf, img, spec)
        if np.all(grad == 0):
            continue
        stepped = img + 1e-5 * grad / np.abs(grad).max()
        assert loss(clf, stepped, spec) >= loss(clf, img, spec) - 1e-12


def test_synth_dataset_deterministic_and_balanced():
    a = synth_dataset(8, 8, 3, 5, seed=7)
    b = synth_dataset(8, 8, 3, 5, seed=7)
    assert np.array_equal(a.images, b.images)
    assert np.array_equal(a.labels, b.labels)
    assert all((a.labels == k).sum() == 5 for k in range(3))


def test_synth_dataset_prototypes_separated():
    ds = synth_dataset(16, 16, 4, 6, seed=8)
    protos = [classifiers.class_prototype(ds, k) for k in range(4)]
    for i in range(4):
        for j in range(i + 1, 4):
            assert imagecore.dist(protos[i], protos[j], "l2_normalized") >= 0.1


def test_synth_dataset_linearly_probeable():
    ds = synth_dataset(12, 12, 2, 20, seed=9)
    clf = train(ds, "linear", epochs=60, lr=1.0, seed=9)
    assert accuracy(clf, ds) >= 0.95


def test_train_linear_separable_to_perfection():
    # two obvious blobs: bright vs dark
    rng = np.random.default_rng(10)
    imgs = np.concatenate([
        rng.uniform(0.0, 0.3, (20, 6, 6, 3)),
        rng.uniform(0.7, 1.0, (20, 6, 6, 3))])
    labels = np.array([0] * 20 + [1] * 20)
    ds = Dataset(imgs, labels, 2)
    clf = train(ds, "linear", epochs=80, lr=1.0, seed=10)
    assert accuracy(clf, ds) == 1.0
    assert clf.train_accuracy == 1.0


def test_train_mlp_reaches_98_percent():
    ds = synth_dataset(32, 32, 8, 24, seed=11)
    clf = train(ds, (64,), epochs=50, lr=0.05, seed=11)
    assert clf.train_accuracy >= 0.98


def test_train_zero_epochs_returns_seeded_init():
    ds = synth_dataset(8, 8, 2, 4, seed=12)
    a = train(ds, (8,), epochs=0, lr=0.1, seed=12)
    b = train(ds, (8,), epochs=0, lr=0.1, seed=12)
    for (wa, ba), (wb, bb) in zip(a.layers, b.layers):
        assert np.array_equal(wa, wb)
        assert np.array_equal(ba, bb)


def test_train_determinism():
    ds = synth_dataset(8, 8, 3, 6, seed=13)
    a = train(ds, (8,), epochs=5, lr=0.05, seed=13)
    b = train(ds, (8,), epochs=5, lr=0.05, seed=13)
    for (wa, _), (wb, _) in zip(a.layers, b.layers):
        assert np.array_equal(wa, wb)


def test_zero_mean_weights_ignore_uniform_offset():
    rng = np.random.default_rng(14)
    weights = rng.uniform(-1, 1, (4, 4, 3))
    weights -= weights.mean()
    clf = LinearClassifier(weights)
    img = rng.uniform(0.2, 0.8, (4, 4, 3))
    _, margin = predict(clf, img)
    _, shifted = predict(clf, np.clip(img + 0.1, 0, 1.2))
    assert shifted == pytest.approx(margin, abs=1e-9)


def test_uniform_offset_shifts_margin_by_weight_sum():
    rng = np.random.default_rng(15)
    weights = rng.uniform(-1, 1, (3, 3, 3))
    clf = LinearClassifier(weights)
    img = rng.uniform(0, 0.5, (3, 3, 3))
    _, m0 = predict(clf, img)
    _, m1 = predict(clf, img + 0.2)
    assert m1 - m0 == pytest.approx(0.2 * weights.sum(), abs=1e-9)


def test_offset_jitter_training_keeps_offset_robustness():
    ds = synth_dataset(8, 8, 2, 16, seed=16)
    clf = train(ds, "linear", epochs=60, lr=1.0, seed=16, offset_jitter=0.15)
    flips = 0
    for img, label in zip(ds.images, ds.labels):
        base_label, _ = predict(clf, img)
        shifted_label, _ = predict(clf, np.clip(img + 0.12, 0, 1))
        flips += base_label != shifted_label
    assert flips <= 1


def test_classifier_serialization_round_trip(tmp_path):
    ds = synth_dataset(8, 8, 3, 6, seed=17)
    clf = train(ds, (8,), epochs=10, lr=0.05, seed=17)
    classifiers.save_classifier(clf, tmp_path / "mlp")
    back = classifiers.load_classifier(tmp_path / "mlp")
    rng = np.random.default_rng(17)
    for _ in range(5):
        img = rng.uniform(0, 1, (8, 8, 3))
        assert predict(back, img)[0] == predict(clf, img)[0]

    lin = LinearClassifier(rng.uniform(-1, 1, (8, 8, 3)))
    classifiers.save_classifier(lin, tmp_path / "lin")
    lin_back = classifiers.load_classifier(tmp_path / "lin")
    assert np.allclose(lin_back.weights, lin.weights, atol=1e-6)


def test_train_divergence_raises():
    ds = synth_dataset(8, 8, 2, 8, seed=18)
    with pytest.raises(RuntimeError, match="diverged"):
        train(ds, (8,), epochs=200, lr=1e6, seed=18)
