"""Structured-illumination attack loop.

The attack works in the camera's output space: a gradient backbone
(FGSM or PGD, under an l-inf or l2 budget) proposes a capture
perturbation, and a projection step keeps it physically achievable by
inverting the channel model, clipping the implied projector input to
the model's trusted interval, and mapping the clipped input forward
again.  The compensated variant runs that loop through a calibrated
channel model; the uncompensated baseline assumes the channel is the
identity and only clips the projector input to [0, 1].
"""

import csv
import os
from dataclasses import dataclass

import numpy as np

from . import imagecore, optics
from .classifiers import LossSpec, grad_input, loss, predict


@dataclass(frozen=True)
class AttackConfig:
    """Backbone choice and budgets; field defaults follow the l-inf recipe."""

    backbone: str = "pgd"   # "pgd" | "fgsm"
    norm: str = "linf"      # "linf" | "l2"
    alpha: float = 0.05     # output-space perturbation bound
    step_size: float = 0.05
    iterations: int = 20
    block: int = 8          # gradient sharing tile edge
    compensated: bool = True
    seed: int = 0

    def __post_init__(self):
        if self.backbone not in ("pgd", "fgsm"):
            raise ValueError(f"unknown backbone {self.backbone!r}")
        if self.norm not in ("linf", "l2"):
            raise ValueError(f"unknown norm {self.norm!r}")
        if self.alpha <= 0.0 or self.step_size <= 0.0:
            raise ValueError("alpha and step_size must be positive")
        if self.iterations < 1 or self.block < 1:
            raise ValueError("iterations and block must be >= 1")

    @classmethod
    def defaults(cls, norm: str = "linf", **overrides) -> "AttackConfig":
        """Standard budgets: 0.05/0.05 for l-inf, 0.5/0.5 for l2."""
        base = dict(alpha=0.05, step_size=0.05) if norm == "linf" \
            else dict(alpha=0.5, step_size=0.5)
        base.update(norm=norm, **overrides)
        return cls(**base)


@dataclass
class AttackResult:
    """Everything an attack run produced, plus its evaluation verdict."""

    output_pert: np.ndarray        # final capture-space perturbation
    input_pert: np.ndarray         # projector-space perturbation
    illumination: np.ndarray       # base + input_pert, within the regime
    simulated_capture: np.ndarray  # noiseless capture of the illumination
    loss_trace: np.ndarray         # objective after each iteration
    pert_linf_trace: np.ndarray    # post-projection norms per iteration
    pert_l2_trace: np.ndarray
    success: bool
    predicted: int
    confidence: float
    distance: float                # normalized l2 clean-vs-attacked capture


def block_average(grad, block: int) -> np.ndarray:
    """Average the gradient over block x block tiles, per channel.

    Remainder tiles on the right/bottom edges average over their actual
    extent.  Every pixel of a tile receives the tile mean.
    """
    grad = imagecore.as_image(grad)
    if block == 1:
        return grad.copy()
    h, w = grad.shape[:2]
    row_edges = np.arange(0, h, block)
    col_edges = np.arange(0, w, block)
    sums = np.add.reduceat(np.add.reduceat(grad, row_edges, axis=0),
                           col_edges, axis=1)
    row_sizes = np.diff(np.append(row_edges, h))
    col_sizes = np.diff(np.append(col_edges, w))
    areas = row_sizes[:, None] * col_sizes[None, :]
    means = sums / areas[..., None]
    return np.repeat(np.repeat(means, row_sizes, axis=0), col_sizes, axis=1)


def backbone_step(grad, pert, cfg: AttackConfig) -> np.ndarray:
    """One update of the output-space perturbation.

    The gradient is block-averaged first.  PGD l-inf takes a signed step
    and clamps into the alpha box; PGD l2 takes a normalized step and
    rescales into the alpha ball (skipping on a zero gradient); FGSM is
    the single closed-form signed step, ignoring the incoming value.
    """
    grad = block_average(grad, cfg.block)
    pert = imagecore.as_image(pert)
    if grad.shape != pert.shape:
        raise ValueError("gradient and perturbation shapes differ")
    if cfg.backbone == "fgsm":
        return cfg.alpha * np.sign(grad)
    if cfg.norm == "linf":
        return np.clip(pert + cfg.step_size * np.sign(grad),
                       -cfg.alpha, cfg.alpha)
    norm = float(np.sqrt(np.sum(grad * grad)))
    if norm == 0.0:
        return pert.copy()
    moved = pert + cfg.step_size * grad / norm
    total = float(np.sqrt(np.sum(moved * moved)))
    if total > cfg.alpha:
        moved = moved * (cfg.alpha / total)
    return moved


def project_achievable(model, clean_capture, base_illum, pert) -> np.ndarray:
    """Snap an output perturbation onto the physically achievable set.

    Inverts the perturbed capture through the model, clips the implied
    projector input to the model's trusted interval, and re-applies the
    forward model.  ``base_illum`` is the illumination that produced
    ``clean_capture``; it is carried for interface symmetry with the
    attack loop and not consumed by the formula itself.
    """
    del base_illum
    lo, hi = model.regime
    implied = model.invert(imagecore.as_image(clean_capture) + pert)
    return model.forward(np.clip(implied, lo, hi)) - clean_capture


def _finish(channel, classifier, base_illum, input_pert, pert, spec, traces):
    illumination = base_illum + input_pert
    clean_true = optics.capture(channel, base_illum)
    predicted, confidence, distance = evaluate(
        channel, classifier, illumination, clean_true, spec)
    if spec.mode == "targeted":
        success = predicted == spec.label
    else:
        success = predicted != spec.label
    losses, linfs, l2s = traces
    return AttackResult(
        output_pert=pert, input_pert=input_pert, illumination=illumination,
        simulated_capture=optics.capture(channel, illumination),
        loss_trace=np.array(losses), pert_linf_trace=np.array(linfs),
        pert_l2_trace=np.array(l2s), success=success, predicted=predicted,
        confidence=confidence, distance=distance)


def compensated_attack(model, channel, classifier, base_illum,
                       spec: LossSpec, cfg: AttackConfig) -> AttackResult:
    """Full attack through a channel model (use the calibrated estimate,
    or the ground-truth channel itself for exact-model studies).

    Each iteration takes a backbone step from the gradient at the
    current perturbed capture, then projects onto the achievable set.
    The final illumination is explicitly clipped into the regime, and
    the verdict comes from a noiseless capture through the true channel.
    """
    base_illum = imagecore.as_image(base_illum)
    lo, hi = model.regime
    if base_illum.min() < lo or base_illum.max() > hi:
        raise ValueError(f"base illumination outside the regime [{lo}, {hi}]")
    clean = model.forward(base_illum)
    pert = np.zeros_like(clean)
    losses, linfs, l2s = [], [], []
    for _ in range(cfg.iterations):
        grad = grad_input(classifier, clean + pert, spec)
        pert = backbone_step(grad, pert, cfg)
        pert = project_achievable(model, clean, base_illum, pert)
        losses.append(loss(classifier, clean + pert, spec))
        linfs.append(float(np.max(np.abs(pert))))
        l2s.append(float(np.sqrt(np.sum(pert * pert))))
    input_pert = np.clip(model.invert(clean + pert), lo, hi) - base_illum
    return _finish(channel, classifier, base_illum, input_pert, pert,
                   spec, (losses, linfs, l2s))


def uncompensated_attack(channel, classifier, base_illum,
                         spec: LossSpec, cfg: AttackConfig) -> AttackResult:
    """Baseline that ignores the channel: the digital perturbation is
    added to the projector input directly, clipped so the illumination
    stays in [0, 1], and judged through the true channel."""
    base_illum = imagecore.as_image(base_illum)
    clean = optics.capture(channel, base_illum)
    pert = np.zeros_like(clean)
    losses, linfs, l2s = [], [], []
    for _ in range(cfg.iterations):
        grad = grad_input(classifier, clean + pert, spec)
        pert = backbone_step(grad, pert, cfg)
        pert = np.clip(base_illum + pert, 0.0, 1.0) - base_illum
        losses.append(loss(classifier, clean + pert, spec))
        linfs.append(float(np.max(np.abs(pert))))
        l2s.append(float(np.sqrt(np.sum(pert * pert))))
    return _finish(channel, classifier, base_illum, pert.copy(), pert,
                   spec, (losses, linfs, l2s))


def evaluate(channel, classifier, illumination, clean_capture,
             spec: LossSpec):
    """Noiseless capture, prediction, squashed confidence, and distance."""
    illumination = imagecore.as_image(illumination)
    if illumination.min() < 0.0 or illumination.max() > 1.0:
        raise ValueError("illumination must lie in [0, 1]")
    cap = optics.capture(channel, illumination)
    predicted, scores = predict(classifier, cap)
    if np.isscalar(scores):
        confidence = float(1.0 / (1.0 + np.exp(-predicted * scores)))
    else:
        shifted = scores - scores.max()
        probs = np.exp(shifted) / np.exp(shifted).sum()
        confidence = float(probs[predicted])
    distance = imagecore.dist(cap, clean_capture, "l2_normalized")
    return predicted, confidence, distance


def save_attack_result(result: AttackResult, dirpath) -> None:
    """Write illumination/capture as PNG + tensor, traces and metrics as CSV."""
    os.makedirs(dirpath, exist_ok=True)
    imagecore.save_png(np.clip(result.illumination, 0.0, 1.0),
                       os.path.join(dirpath, "illumination.png"))
    imagecore.save_tensor(result.illumination,
                          os.path.join(dirpath, "illumination.opt1"))
    imagecore.save_png(np.clip(result.simulated_capture, 0.0, 1.0),
                       os.path.join(dirpath, "capture.png"))
    imagecore.save_tensor(result.simulated_capture,
                          os.path.join(dirpath, "capture.opt1"))
    with open(os.path.join(dirpath, "trace.csv"), "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["iter", "loss", "eta_linf", "eta_l2"])
        rows = zip(result.loss_trace, result.pert_linf_trace,
                   result.pert_l2_trace)
        for i, (lv, ninf, n2) in enumerate(rows):
            writer.writerow([i, f"{lv:.9g}", f"{ninf:.9g}", f"{n2:.9g}"])
    with open(os.path.join(dirpath, "metrics.csv"), "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["success", "predicted", "confidence", "distance"])
        writer.writerow([int(result.success), result.predicted,
                         f"{result.confidence:.9g}", f"{result.distance:.9g}"])
