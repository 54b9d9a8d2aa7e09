"""Feasibility analysis for binary linear classifiers.

Per pixel, the set of achievable capture values is the image of a
per-channel brightness box under the pixel's affine color map: a
parallelepiped.  Intersecting its translate around the clean capture
with the attack's l-inf budget box gives a polytope in 3 variables with
12 linear constraints; the best achievable margin movement is an LP
over that polytope, solved exactly by enumerating all C(12,3) = 220
triples of potentially active constraints.  Summing per-pixel gains and
comparing against the margin that must be overcome decides feasibility
before any attack is run.
"""

import itertools
from dataclasses import dataclass

import numpy as np

from . import imagecore
from .calibration import EstimatedChannelModel

_FEAS_TOL = 1e-9
_ACTIVE_TOL = 1e-7
_LP_CHUNK = 512
_TRIPLES = np.array(list(itertools.combinations(range(12), 3)))


@dataclass(frozen=True)
class PixelPolytope:
    """Achievable capture set at one pixel: affine image of a brightness box."""

    vertices: np.ndarray   # (8, 3) images of the box corners
    box_lo: np.ndarray     # (3,) per-channel brightness interval
    box_hi: np.ndarray
    mixing: np.ndarray     # (3, 3) the pixel's affine map
    offset: np.ndarray     # (3,)


@dataclass(frozen=True)
class FeasibilityReport:
    """Outcome of the margin-gain analysis for one classifier/scene pair."""

    feasible: bool
    max_margin_gain: float      # certified achievable gain (exact for linf)
    required_gain: float        # margin magnitude standing in the way
    pixel_gains: np.ndarray     # (H, W) per-pixel contributions
    alpha_bound_frac: float     # pixels whose optimum presses the budget box
    omega_bound_frac: float     # pixels whose optimum presses the achievable set
    norm: str = "linf"
    gain_upper: float = None    # l2 only: upper bound on the achievable gain

    def __post_init__(self):
        if self.feasible != (self.max_margin_gain >= self.required_gain):
            raise ValueError("feasible flag inconsistent with gains")


def _affine_parts(model, regime):
    """Mixing field, offset field, and the brightness box for the regime."""
    lo, hi = regime
    if isinstance(model, EstimatedChannelModel):
        box_lo = np.array([float(c.inverse(lo)) for c in model.curves])
        box_hi = np.array([float(c.inverse(hi)) for c in model.curves])
        return model.coeffs, model.offset, box_lo, box_hi
    box_lo = model.response(np.full(3, float(lo)))
    box_hi = model.response(np.full(3, float(hi)))
    return model.spectral.mixing, model.spectral.offset, box_lo, box_hi


def pixel_polytope(model, pixel, regime=None) -> PixelPolytope:
    """The achievable-capture parallelepiped at one (row, col) pixel."""
    regime = model.regime if regime is None else regime
    mats, offs, box_lo, box_hi = _affine_parts(model, regime)
    row, col = pixel
    if not (0 <= row < mats.shape[0] and 0 <= col < mats.shape[1]):
        raise IndexError(f"pixel {pixel} outside {mats.shape[:2]}")
    mixing = mats[row, col]
    offset = offs[row, col]
    corners = np.array(list(itertools.product(*zip(box_lo, box_hi))))
    vertices = corners @ mixing.T + offset
    return PixelPolytope(vertices=vertices, box_lo=box_lo, box_hi=box_hi,
                         mixing=mixing, offset=offset)


def _pixel_lp_batch(mats, offs, clean, direction, box_lo, box_hi, alpha):
    """Exact per-pixel LPs, vectorized over a chunk of pixels.

    Maximizes direction . (M z + offset - clean) over the brightness box
    intersected with the alpha budget box around the clean capture, by
    solving every triple of active constraints and keeping the feasible
    intersection points (box corners included: they are triples of box
    constraints).  Returns per-pixel gains and binding flags.
    """
    n = mats.shape[0]
    eye = np.broadcast_to(np.eye(3), (n, 3, 3))
    rows = np.concatenate([eye, -eye, mats, -mats], axis=1)  # (n, 12, 3)
    shift = offs - clean
    bounds = np.concatenate([
        np.broadcast_to(box_hi, (n, 3)), np.broadcast_to(-box_lo, (n, 3)),
        alpha - shift, alpha + shift], axis=1)               # (n, 12)

    objective = np.einsum("nij,ni->nj", mats, direction)     # (n, 3)
    sub_rows = rows[:, _TRIPLES]                              # (n, 220, 3, 3)
    sub_bounds = bounds[:, _TRIPLES]                          # (n, 220, 3)
    dets = np.linalg.det(sub_rows)
    solvable = np.abs(dets) > 1e-12
    points = np.zeros((n, len(_TRIPLES), 3))
    if solvable.any():
        points[solvable] = np.linalg.solve(
            sub_rows[solvable], sub_bounds[solvable][..., None])[..., 0]
    residual = bounds[:, None, :] - np.einsum("nkj,ncj->nck", rows, points)
    feasible = solvable & np.all(residual >= -_FEAS_TOL, axis=2)
    values = np.einsum("nj,ncj->nc", objective, points)
    values = np.where(feasible, values, -np.inf)
    best = np.argmax(values, axis=1)
    idx = np.arange(n)
    gains = values[idx, best] + np.einsum("nj,nj->n", direction, shift)
    found = np.isfinite(gains)
    gains = np.where(found, gains, 0.0)

    active = residual[idx, best] <= _ACTIVE_TOL               # (n, 12)
    alpha_bound = found & active[:, 6:].any(axis=1)
    omega_bound = found & active[:, :6].any(axis=1)
    return gains, alpha_bound, omega_bound, ~found


def max_margin_gain_linf(model, clean_capture, weights, target_sign: int,
                         alpha: float, regime=None) -> FeasibilityReport:
    """Exact maximum margin movement toward the target under an l-inf budget.

    The total decomposes per pixel because both the achievable set and
    the budget box are per-pixel products.  ``required_gain`` is how far
    the clean margin sits on the wrong side of the boundary; the attack
    is feasible iff the summed gain covers it.
    """
    regime = model.regime if regime is None else regime
    clean_capture = imagecore.as_image(clean_capture)
    weights = imagecore.as_image(weights)
    mats, offs, box_lo, box_hi = _affine_parts(model, regime)
    h, w = mats.shape[:2]
    if clean_capture.shape != (h, w, 3) or weights.shape != (h, w, 3):
        raise ValueError("capture/weights do not match the model grid")
    if target_sign not in (-1, 1):
        raise ValueError("target_sign must be +1 or -1")

    direction = (target_sign * weights).reshape(-1, 3)
    mats_f = mats.reshape(-1, 3, 3)
    offs_f = offs.reshape(-1, 3)
    clean_f = clean_capture.reshape(-1, 3)
    gains = np.empty(h * w)
    alpha_bound = np.empty(h * w, dtype=bool)
    omega_bound = np.empty(h * w, dtype=bool)
    for start in range(0, h * w, _LP_CHUNK):
        sl = slice(start, min(start + _LP_CHUNK, h * w))
        g, ab, ob, missing = _pixel_lp_batch(
            mats_f[sl], offs_f[sl], clean_f[sl], direction[sl],
            box_lo, box_hi, alpha)
        if missing.any():
            # No feasible vertex found: numerically degenerate pixel.
            ab = ab & ~missing
            ob = ob & ~missing
        gains[sl], alpha_bound[sl], omega_bound[sl] = g, ab, ob

    margin = float(np.sum(weights * clean_capture))
    required = max(0.0, -target_sign * margin)
    total = float(gains.sum())
    return FeasibilityReport(
        feasible=total >= required, max_margin_gain=total,
        required_gain=required, pixel_gains=gains.reshape(h, w),
        alpha_bound_frac=float(alpha_bound.mean()),
        omega_bound_frac=float(omega_bound.mean()))


def feasibility(classifier, model, base_illum, spec, alpha: float,
                norm: str = "linf") -> FeasibilityReport:
    """Margin-gain certificate for a binary linear classifier.

    ``linf`` is exact.  ``l2`` reports bounds: the certified gain is the
    larger of a whole-image inscribed-box solve (budget alpha/sqrt(3N))
    and the best single-pixel direction (budget alpha/sqrt(3)); the
    upper bound is the enclosing-box solve at alpha.  Coupled exact l2
    maximization is out of scope.
    """
    from .classifiers import LinearClassifier

    if not isinstance(classifier, LinearClassifier):
        raise TypeError("the exact oracle supports binary linear classifiers")
    if norm not in ("linf", "l2"):
        raise ValueError(f"unknown norm {norm!r}")
    base_illum = imagecore.as_image(base_illum)
    clean = model.forward(base_illum)
    target_sign = spec.label if spec.mode == "targeted" else -spec.label
    if norm == "linf":
        return max_margin_gain_linf(model, clean, classifier.weights,
                                    target_sign, alpha)
    upper = max_margin_gain_linf(model, clean, classifier.weights,
                                 target_sign, alpha)
    n_comp = clean.size
    spread = max_margin_gain_linf(model, clean, classifier.weights,
                                  target_sign, alpha / np.sqrt(n_comp))
    single = max_margin_gain_linf(model, clean, classifier.weights,
                                  target_sign, alpha / np.sqrt(3.0))
    best_single = float(single.pixel_gains.max())
    certified = max(spread.max_margin_gain, best_single)
    return FeasibilityReport(
        feasible=certified >= upper.required_gain,
        max_margin_gain=certified, required_gain=upper.required_gain,
        pixel_gains=spread.pixel_gains,
        alpha_bound_frac=spread.alpha_bound_frac,
        omega_bound_frac=spread.omega_bound_frac,
        norm="l2", gain_upper=upper.max_margin_gain)


@dataclass(frozen=True)
class ConditioningReport:
    """Per-pixel spectra of the color maps plus saturation flags."""

    singular_values: np.ndarray  # (H, W, 3) descending
    condition: np.ndarray        # (H, W)
    saturated: np.ndarray        # (H, W) any clean-capture channel >= 250/255
    clean_capture: np.ndarray


def conditioning_report(model, base_illum=None) -> ConditioningReport:
    """Singular values and condition numbers of the per-pixel color maps."""
    if isinstance(model, EstimatedChannelModel):
        mats = model.coeffs
        clean_src = model
    else:
        mats = model.spectral.mixing
        clean_src = model
    if base_illum is None:
        base_illum = imagecore.uniform(mats.shape[0], mats.shape[1], 140.0 / 255.0)
    clean = np.clip(clean_src.forward(base_illum), 0.0, 1.0)
    svals = np.linalg.svd(mats, compute_uv=False)
    smallest = svals[..., -1]
    condition = np.where(smallest > 0.0, svals[..., 0] / np.maximum(smallest, 1e-300),
                         np.inf)
    saturated = np.any(clean >= 250.0 / 255.0, axis=-1)
    return ConditioningReport(singular_values=svals, condition=condition,
                              saturated=saturated, clean_capture=clean)
