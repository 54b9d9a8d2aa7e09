"""Small differentiable classifiers with exact input gradients.

Two families: a binary linear model over the raw pixel grid (labels
+1/-1, prediction by margin sign) and a rectifier MLP over the
flattened image with raw class scores.  Both run entirely in float64 so
finite-difference checks of the gradients have headroom.  Training is
plain mini-batch gradient descent with the batch order derived from the
seed, so equal seeds give bitwise equal classifiers.
"""

import os
from dataclasses import dataclass

import numpy as np

from . import imagecore


@dataclass(frozen=True)
class LossSpec:
    """Attack objective: which label to move toward (or away from)."""

    mode: str   # "targeted" | "untargeted"
    label: int  # target label (targeted) or true label (untargeted)

    def __post_init__(self):
        if self.mode not in ("targeted", "untargeted"):
            raise ValueError(f"unknown mode {self.mode!r}")


class LinearClassifier:
    """Binary classifier: sign of the inner product with a weight image."""

    def __init__(self, weights):
        weights = imagecore.as_image(weights)
        if not np.all(np.isfinite(weights)) or not np.any(weights):
            raise ValueError("weights must be finite and not all zero")
        self.weights = weights
        self.n_classes = 2
        self.train_accuracy = None

    @property
    def input_shape(self):
        return self.weights.shape

    def margin(self, img) -> float:
        img = imagecore.as_image(img)
        if img.shape != self.weights.shape:
            raise ValueError("input does not match the weight grid")
        return float(np.sum(self.weights * img))


class MlpClassifier:
    """Rectifier MLP over the flattened image, raw scores for K classes."""

    def __init__(self, input_shape, layers):
        h, w, c = input_shape
        if c != 3:
            raise ValueError("input shape must be (H, W, 3)")
        dims = [h * w * 3] + [wt.shape[0] for wt, _ in layers]
        for (wt, bias), d_in, d_out in zip(layers, dims[:-1], dims[1:]):
            if wt.shape != (d_out, d_in) or bias.shape != (d_out,):
                raise ValueError("layer dimensions do not chain")
        if dims[-1] < 2:
            raise ValueError("need at least 2 output classes")
        self.input_shape = tuple(input_shape)
        self.layers = [(np.asarray(wt, dtype=np.float64),
                        np.asarray(bias, dtype=np.float64)) for wt, bias in layers]
        self.n_classes = dims[-1]
        self.train_accuracy = None

    def scores(self, img) -> np.ndarray:
        img = imagecore.as_image(img)
        if img.shape != self.input_shape:
            raise ValueError("input does not match the classifier grid")
        act = img.reshape(-1)
        for wt, bias in self.layers[:-1]:
            act = np.maximum(wt @ act + bias, 0.0)
        wt, bias = self.layers[-1]
        return wt @ act + bias


def _softmax(scores: np.ndarray) -> np.ndarray:
    shifted = scores - scores.max()
    e = np.exp(shifted)
    return e / e.sum()


def _log_softmax(scores: np.ndarray) -> np.ndarray:
    shifted = scores - scores.max()
    return shifted - np.log(np.exp(shifted).sum())


def _check_label(classifier, spec: LossSpec) -> None:
    if isinstance(classifier, LinearClassifier):
        if spec.label not in (-1, 1):
            raise ValueError("binary linear labels are +1/-1")
    elif not (0 <= spec.label < classifier.n_classes):
        raise ValueError(f"label {spec.label} outside [0, {classifier.n_classes})")


def predict(classifier, img):
    """Label plus unnormalized scores (margin / pre-softmax).

    Linear ties resolve to +1; MLP ties resolve to the lowest index.
    """
    if isinstance(classifier, LinearClassifier):
        m = classifier.margin(img)
        return (1 if m >= 0.0 else -1), m
    scores = classifier.scores(img)
    return int(np.argmax(scores)), scores


def loss(classifier, img, spec: LossSpec) -> float:
    """The quantity the attack maximizes.

    Targeted: increases as the prediction moves toward the target
    (negative cross-entropy of the target class for the MLP, the
    target-signed margin for the linear model).  Untargeted: increases
    as the prediction moves away from the true label.
    """
    _check_label(classifier, spec)
    sign = 1.0 if spec.mode == "targeted" else -1.0
    if isinstance(classifier, LinearClassifier):
        return sign * spec.label * classifier.margin(img)
    log_probs = _log_softmax(classifier.scores(img))
    return sign * float(log_probs[spec.label])


def grad_input(classifier, img, spec: LossSpec) -> np.ndarray:
    """Exact gradient of :func:`loss` with respect to every input component."""
    _check_label(classifier, spec)
    sign = 1.0 if spec.mode == "targeted" else -1.0
    if isinstance(classifier, LinearClassifier):
        imagecore.as_image(img)  # shape check parity with loss()
        return sign * spec.label * classifier.weights

    img = imagecore.as_image(img)
    act = img.reshape(-1)
    activations = [act]
    for wt, bias in classifier.layers[:-1]:
        act = np.maximum(wt @ act + bias, 0.0)
        activations.append(act)
    wt, bias = classifier.layers[-1]
    scores = wt @ activations[-1] + bias

    probs = _softmax(scores)
    d_scores = -probs
    d_scores[spec.label] += 1.0
    d_scores *= sign
    grad = classifier.layers[-1][0].T @ d_scores
    for (wt, _), act in zip(reversed(classifier.layers[:-1]),
                            reversed(activations[1:])):
        grad = wt.T @ (grad * (act > 0.0))
    return grad.reshape(classifier.input_shape)


@dataclass(frozen=True)
class Dataset:
    """Labeled image collection; labels in [0, K)."""

    images: np.ndarray  # (n, H, W, 3)
    labels: np.ndarray  # (n,)
    n_classes: int

    def __post_init__(self):
        if self.images.ndim != 4 or self.images.shape[3] != 3:
            raise ValueError("images must be (n, H, W, 3)")
        if self.labels.shape != (self.images.shape[0],):
            raise ValueError("one label per image required")
        if self.labels.min() < 0 or self.labels.max() >= self.n_classes:
            raise ValueError("labels outside [0, K)")

    def __len__(self):
        return self.images.shape[0]


def _class_palette(rng, k: int) -> np.ndarray:
    """Well-separated base colors: rejection-resample until pairwise far."""
    colors = [rng.uniform(0.15, 0.85, 3)]
    while len(colors) < k:
        cand = rng.uniform(0.15, 0.85, 3)
        if min(np.linalg.norm(cand - c) for c in colors) >= 0.25:
            colors.append(cand)
    return np.array(colors)


def synth_dataset(width: int, height: int, n_classes: int, n_per_class: int,
                  seed: int = 0) -> Dataset:
    """Smooth striped color prototypes per class plus per-sample jitter."""
    if n_classes < 2:
        raise ValueError("need at least 2 classes")
    rng = np.random.default_rng(seed)
    palette = _class_palette(rng, n_classes)
    ys, xs = np.mgrid[0:height, 0:width]
    span = max(height, width)
    images, labels = [], []
    for cls in range(n_classes):
        freq = 1.0 + (cls % 4)
        angle = rng.uniform(0.0, np.pi)
        phase = rng.uniform(0.0, 2.0 * np.pi)
        stripe_dir = rng.uniform(-1.0, 1.0, 3)
        wave = np.sin(2.0 * np.pi * freq
                      * (np.cos(angle) * xs + np.sin(angle) * ys) / span + phase)
        proto = palette[cls] + 0.22 * wave[..., None] * stripe_dir
        proto = np.clip(proto, 0.02, 0.98)
        for _ in range(n_per_class):
            jitter = 0.03 * rng.standard_normal((height, width, 3))
            images.append(np.clip(proto + jitter, 0.0, 1.0))
            labels.append(cls)
    return Dataset(np.array(images), np.array(labels, dtype=np.int64), n_classes)


def class_prototype(dataset: Dataset, cls: int) -> np.ndarray:
    """Mean image of one class."""
    return dataset.images[dataset.labels == cls].mean(axis=0)


def accuracy(classifier, dataset: Dataset) -> float:
    hits = 0
    for img, label in zip(dataset.images, dataset.labels):
        pred, _ = predict(classifier, img)
        if isinstance(classifier, LinearClassifier):
            pred = 1 if pred > 0 else 0
        hits += int(pred == label)
    return hits / len(dataset)


def train(dataset: Dataset, arch, epochs: int, lr: float, seed: int = 0,
          batch_size: int = 32, offset_jitter: float = 0.0):
    """Deterministic mini-batch gradient descent.

    ``arch`` is ``"linear"`` (binary, labels 0/1 mapped to -1/+1) or a
    tuple of hidden layer widths for an MLP.  ``offset_jitter`` adds a
    uniform per-sample brightness offset during training so a flat
    illumination shift does not flip labels; off by default.
    """
    rng = np.random.default_rng(seed)
    n = len(dataset)
    flat = dataset.images.reshape(n, -1)
    dim = flat.shape[1]

    if arch == "linear":
        if dataset.n_classes != 2:
            raise ValueError("linear training needs a 2-class dataset")
        signs = 2.0 * dataset.labels - 1.0
        weights = 0.01 * rng.standard_normal(dim)
        for _ in range(epochs):
            order = rng.permutation(n)
            epoch_loss = 0.0
            for start in range(0, n, batch_size):
                idx = order[start:start + batch_size]
                batch = flat[idx]
                if offset_jitter > 0.0:
                    batch = batch + rng.uniform(
                        -offset_jitter, offset_jitter, (len(idx), 1))
                margins = signs[idx] * (batch @ weights)
                with np.errstate(over="ignore"):
                    epoch_loss += float(np.log1p(np.exp(-margins)).sum())
                    # logistic loss gradient: -y*x*sigmoid(-y*w.x)
                    coeff = -signs[idx] / (1.0 + np.exp(margins))
                grad = (coeff @ batch) / len(idx)
                weights = weights - lr * grad
            if not np.isfinite(epoch_loss) or not np.all(np.isfinite(weights)):
                raise RuntimeError("training diverged (non-finite loss)")
        clf = LinearClassifier(weights.reshape(dataset.images.shape[1:]))
        clf.train_accuracy = accuracy(clf, dataset)
        return clf

    hidden = tuple(arch)
    dims = [dim] + list(hidden) + [dataset.n_classes]
    layers = []
    for d_in, d_out in zip(dims[:-1], dims[1:]):
        scale = np.sqrt(2.0 / d_in)
        layers.append([scale * rng.standard_normal((d_out, d_in)),
                       np.zeros(d_out)])
    for _ in range(epochs):
        order = rng.permutation(n)
        epoch_loss = 0.0
        for start in range(0, n, batch_size):
            idx = order[start:start + batch_size]
            batch = flat[idx]
            if offset_jitter > 0.0:
                batch = batch + rng.uniform(
                    -offset_jitter, offset_jitter, (len(idx), 1))
            acts = [batch]
            for wt, bias in layers[:-1]:
                acts.append(np.maximum(acts[-1] @ wt.T + bias, 0.0))
            logits = acts[-1] @ layers[-1][0].T + layers[-1][1]
            shifted = logits - logits.max(axis=1, keepdims=True)
            probs = np.exp(shifted)
            probs /= probs.sum(axis=1, keepdims=True)
            with np.errstate(divide="ignore"):
                epoch_loss -= float(np.log(
                    probs[np.arange(len(idx)), dataset.labels[idx]]).sum())
            delta = probs
            delta[np.arange(len(idx)), dataset.labels[idx]] -= 1.0
            delta /= len(idx)
            for layer_i in range(len(layers) - 1, -1, -1):
                wt, bias = layers[layer_i]
                grad_w = delta.T @ acts[layer_i]
                grad_b = delta.sum(axis=0)
                if layer_i > 0:
                    delta = (delta @ wt) * (acts[layer_i] > 0.0)
                layers[layer_i][0] = wt - lr * grad_w
                layers[layer_i][1] = bias - lr * grad_b
        if not np.isfinite(epoch_loss) or \
                not all(np.all(np.isfinite(wt)) for wt, _ in layers):
            raise RuntimeError("training diverged (non-finite loss)")
    clf = MlpClassifier(dataset.images.shape[1:],
                        [(wt, bias) for wt, bias in layers])
    clf.train_accuracy = accuracy(clf, dataset)
    return clf


# --- serialization ---------------------------------------------------------

def _save_flat(path, arr) -> None:
    """Pack an arbitrary float array into the 3-channel tensor format."""
    flat = np.asarray(arr, dtype=np.float64).ravel()
    pad = (-flat.size) % 3
    if pad:
        flat = np.concatenate([flat, np.zeros(pad)])
    imagecore.save_tensor(flat.reshape(1, flat.size // 3, 3), path)


def _load_flat(path, shape) -> np.ndarray:
    flat = imagecore.load_tensor(path).ravel()
    count = int(np.prod(shape))
    return flat[:count].reshape(shape)


def save_classifier(classifier, dirpath) -> None:
    from .optics import write_header

    os.makedirs(dirpath, exist_ok=True)
    if isinstance(classifier, LinearClassifier):
        h, w, _ = classifier.weights.shape
        write_header(os.path.join(dirpath, "header.txt"), [
            ("arch", "linear"), ("classes", 2), ("labels", "+1/-1"),
            ("width", w), ("height", h),
        ])
        imagecore.save_tensor(classifier.weights,
                              os.path.join(dirpath, "weights.opt1"))
        return
    h, w, _ = classifier.input_shape
    dims = [wt.shape[0] for wt, _ in classifier.layers]
    write_header(os.path.join(dirpath, "header.txt"), [
        ("arch", "mlp"), ("classes", classifier.n_classes),
        ("labels", "0..K-1"), ("width", w), ("height", h),
        ("dims", ",".join(str(d) for d in dims)),
    ])
    for i, (wt, bias) in enumerate(classifier.layers):
        _save_flat(os.path.join(dirpath, f"layer{i}_w.opt1"), wt)
        _save_flat(os.path.join(dirpath, f"layer{i}_b.opt1"), bias)


def load_classifier(dirpath):
    from .optics import read_header

    header = read_header(os.path.join(dirpath, "header.txt"))
    h, w = int(header["height"]), int(header["width"])
    if header["arch"] == "linear":
        return LinearClassifier(
            imagecore.load_tensor(os.path.join(dirpath, "weights.opt1")))
    dims = [int(d) for d in header["dims"].split(",")]
    layers = []
    d_in = h * w * 3
    for i, d_out in enumerate(dims):
        wt = _load_flat(os.path.join(dirpath, f"layer{i}_w.opt1"), (d_out, d_in))
        bias = _load_flat(os.path.join(dirpath, f"layer{i}_b.opt1"), (d_out,))
        layers.append((wt, bias))
        d_in = d_out
    return MlpClassifier((h, w, 3), layers)
