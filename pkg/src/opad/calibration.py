"""Channel estimation from six calibration captures.

The procedure needs exactly six frames of the same scene: a uniform
gray frame at a low level, three frames that raise a single color
channel to a high level, a uniform gray frame at the high level, and a
ramp frame sweeping every 8-bit level in all channels at once.

From frame differences it recovers, per pixel, the column-normalized
mixing matrix (unit diagonal).  Unmixing with that matrix decouples the
channels, and a scene-independent normalized brightness statistic can
then be pooled across the ramp frame to fit one strictly monotone
response curve per channel.  The same differences, rescaled through the
fitted curves, yield per-pixel forward coefficient matrices and
composite offsets, so the estimated model supports both directions:
capture prediction from an input image, and input recovery from a
capture.  An operating interval is derived from the curve slopes; the
model is only trusted inside it.
"""

import os
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from . import imagecore

LEVEL_LO = 85.0 / 255.0
LEVEL_HI = 140.0 / 255.0
EPS_DELTA = 1.0 / 255.0  # below one quantization step a difference is noise
MIN_CURVE_LEVELS = 32
SLOPE_LO = 0.2
SLOPE_HI = 5.0
_ANCHOR_WEIGHT = 1e12
_TIE_EPS = 1e-9


class CalibrationError(RuntimeError):
    """Estimation failure, labeled with the stage that raised it."""

    def __init__(self, stage: str, message: str):
        super().__init__(f"[{stage}] {message}")
        self.stage = stage


@dataclass(frozen=True)
class CalibrationPatternSet:
    """The six projector input frames plus their two gray levels."""

    gray_lo: np.ndarray
    red_hi: np.ndarray
    green_hi: np.ndarray
    blue_hi: np.ndarray
    gray_hi: np.ndarray
    sweep: np.ndarray
    level_lo: float
    level_hi: float

    def channel_frames(self):
        return (self.red_hi, self.green_hi, self.blue_hi)


@dataclass(frozen=True)
class CalibrationCaptureSet:
    """Camera captures corresponding 1:1 to a pattern set."""

    gray_lo: np.ndarray
    red_hi: np.ndarray
    green_hi: np.ndarray
    blue_hi: np.ndarray
    gray_hi: np.ndarray
    sweep: np.ndarray

    def __post_init__(self):
        shapes = {f.shape for f in self.frames()}
        if len(shapes) != 1:
            raise ValueError(f"capture dimensions disagree: {shapes}")

    def frames(self):
        return (self.gray_lo, self.red_hi, self.green_hi,
                self.blue_hi, self.gray_hi, self.sweep)

    def channel_frames(self):
        return (self.red_hi, self.green_hi, self.blue_hi)


class MonotoneCurve:
    """Strictly increasing piecewise-linear map with an exact inverse.

    Breakpoints must be strictly increasing in both coordinates.
    Evaluation outside the fitted range clamps to the endpoints.
    """

    def __init__(self, x, y):
        x = np.asarray(x, dtype=np.float64)
        y = np.asarray(y, dtype=np.float64)
        if x.ndim != 1 or x.shape != y.shape or x.size < 2:
            raise ValueError("need matching 1-D breakpoint arrays, length >= 2")
        if np.any(np.diff(x) <= 0.0) or np.any(np.diff(y) <= 0.0):
            raise ValueError("breakpoints must be strictly increasing")
        self.x = x
        self.y = y

    def __call__(self, q):
        return np.interp(q, self.x, self.y)

    def inverse(self, v):
        return np.interp(v, self.y, self.x)


def pav_increasing(values, weights) -> np.ndarray:
    """Weighted isotonic regression (pool-adjacent-violators), nondecreasing."""
    blocks = [[v * w, w, 1] for v, w in zip(values, weights)]  # sum, weight, count
    merged = []
    for blk in blocks:
        merged.append(blk)
        while len(merged) > 1 and (merged[-2][0] / merged[-2][1]
                                   > merged[-1][0] / merged[-1][1]):
            s, w, n = merged.pop()
            merged[-1][0] += s
            merged[-1][1] += w
            merged[-1][2] += n
    out = np.empty(len(values))
    pos = 0
    for s, w, n in merged:
        out[pos:pos + n] = s / w
        pos += n
    return out


def make_patterns(width: int, height: int,
                  level_lo: float = LEVEL_LO,
                  level_hi: float = LEVEL_HI) -> CalibrationPatternSet:
    """Build the six input frames for a projector grid of the given size."""
    if not (0.0 < level_lo < level_hi < 1.0):
        raise ValueError("need 0 < level_lo < level_hi < 1")
    if width * height < 256:
        raise ValueError("grid too small: the sweep must cover all 256 levels")
    gray_lo = imagecore.uniform(height, width, level_lo)
    gray_hi = imagecore.uniform(height, width, level_hi)
    singles = []
    for chan in range(3):
        frame = imagecore.uniform(height, width, level_lo)
        frame[..., chan] = level_hi
        singles.append(frame)
    ramp = (np.arange(height * width) % 256) / 255.0
    sweep = np.repeat(ramp, 3).reshape(height, width, 3)
    return CalibrationPatternSet(gray_lo, singles[0], singles[1], singles[2],
                                 gray_hi, sweep, level_lo, level_hi)


def simulate_captures(model, patterns: CalibrationPatternSet,
                      noise=None) -> CalibrationCaptureSet:
    """Capture the six patterns through a ground-truth channel."""
    from . import optics

    noise = optics.NOISELESS if noise is None else noise
    frames = [optics.capture(model, frame, noise)
              for frame in (patterns.gray_lo, patterns.red_hi, patterns.green_hi,
                            patterns.blue_hi, patterns.gray_hi, patterns.sweep)]
    return CalibrationCaptureSet(*frames)


def _nearest_valid_fill(valid: np.ndarray) -> np.ndarray:
    """Index map sending each pixel to its nearest valid pixel.

    Distance is Manhattan; ties resolve to the valid pixel that comes
    first in row-major order.  Implemented as a multi-source BFS seeded
    in row-major order, which realizes exactly that tie-break.
    """
    h, w = valid.shape
    src = np.full((h, w), -1, dtype=np.int64)
    queue = deque()
    flat = np.flatnonzero(valid.ravel())
    for idx in flat:
        src.ravel()[idx] = idx
        queue.append((idx // w, idx % w))
    while queue:
        r, c = queue.popleft()
        here = src[r, c]
        for rr, cc in ((r - 1, c), (r + 1, c), (r, c - 1), (r, c + 1)):
            if 0 <= rr < h and 0 <= cc < w and src[rr, cc] < 0:
                src[rr, cc] = here
                queue.append((rr, cc))
    return src


def estimate_color_ratios(captures: CalibrationCaptureSet):
    """Per-pixel column-normalized mixing (unit diagonal) plus degeneracy mask.

    Column j comes from the ratio of capture differences between the
    channel-j frame and the low gray frame.  A pixel is degenerate in a
    column when the driving same-channel difference falls below
    ``EPS_DELTA``; such columns are copied from the nearest
    non-degenerate pixel.
    """
    h, w = captures.gray_lo.shape[:2]
    ratios = np.zeros((h, w, 3, 3), dtype=np.float64)
    ratios[..., (0, 1, 2), (0, 1, 2)] = 1.0
    degenerate = np.zeros((h, w, 3), dtype=bool)
    for col, frame in enumerate(captures.channel_frames()):
        delta = frame - captures.gray_lo
        driving = delta[..., col]
        bad = np.abs(driving) < EPS_DELTA
        degenerate[..., col] = bad
        if bad.all():
            raise CalibrationError(
                "mixing", f"every pixel is degenerate in column {col}")
        safe = np.where(bad, 1.0, driving)
        column = delta / safe[..., None]
        column[..., col] = 1.0
        if bad.any():
            src = _nearest_valid_fill(~bad)
            column = column.reshape(h * w, 3)[src.ravel()].reshape(h, w, 3)
        ratios[..., :, col] = column
    return ratios, degenerate


def _strictify(values: np.ndarray, anchor_idx) -> np.ndarray:
    """Make a nondecreasing sequence strictly increasing without moving anchors.

    Ties spread by ``_TIE_EPS`` steps: downward below the first anchor,
    upward elsewhere, pulled back under the following anchor if needed.
    """
    out = values.copy()
    ia, ib = anchor_idx
    for i in range(ia - 1, -1, -1):
        if out[i] >= out[i + 1]:
            out[i] = out[i + 1] - _TIE_EPS
    for i in range(ia + 1, ib):
        if out[i] <= out[i - 1]:
            out[i] = out[i - 1] + _TIE_EPS
    for i in range(ib - 1, ia, -1):  # keep the upper anchor fixed
        if out[i] >= out[i + 1]:
            out[i] = out[i + 1] - _TIE_EPS
    for i in range(ib + 1, len(out)):
        if out[i] <= out[i - 1]:
            out[i] = out[i - 1] + _TIE_EPS
    return out


def fit_response_curves(patterns: CalibrationPatternSet,
                        captures: CalibrationCaptureSet,
                        ratios: np.ndarray):
    """Fit one strictly monotone response curve per channel from the sweep.

    Unmixing each sweep pixel decouples the channels; the normalized
    brightness statistic (0 at the low gray level, 1 at the high one by
    definition) is pooled across all pixels, averaged per sweep level,
    made monotone by isotonic regression, and interpolated piecewise
    linearly.  The two gray levels are pinned as exact anchors.
    """
    inv = np.linalg.inv(ratios)
    unmix_lo = np.einsum("hwij,hwj->hwi", inv, captures.gray_lo)
    unmix_hi = np.einsum("hwij,hwj->hwi", inv, captures.gray_hi)
    unmix_sw = np.einsum("hwij,hwj->hwi", inv, captures.sweep)
    denom = unmix_hi - unmix_lo
    stat = (unmix_sw - unmix_lo) / np.where(np.abs(denom) < EPS_DELTA, 1.0, denom)
    usable = np.abs(denom) >= EPS_DELTA

    curves = []
    for chan in range(3):
        levels = np.floor(patterns.sweep[..., chan] * 255.0 + 0.5).astype(np.int64)
        ok = usable[..., chan].ravel()
        if not ok.any():
            raise CalibrationError("response",
                                   f"no usable pixels for channel {chan}")
        lev = levels.ravel()[ok]
        val = stat[..., chan].ravel()[ok]
        sums = np.bincount(lev, weights=val, minlength=256)
        counts = np.bincount(lev, minlength=256)
        present = counts > 0
        if present.sum() < MIN_CURVE_LEVELS:
            raise CalibrationError(
                "response", f"only {int(present.sum())} sweep levels survived "
                f"for channel {chan} (need {MIN_CURVE_LEVELS})")
        inputs = np.flatnonzero(present) / 255.0
        means = sums[present] / counts[present]
        weights = counts[present].astype(np.float64)

        inputs, means, weights, anchors = _insert_anchors(
            inputs, means, weights, patterns.level_lo, patterns.level_hi)
        fitted = pav_increasing(means, weights)
        fitted[anchors[0]] = 0.0
        fitted[anchors[1]] = 1.0
        fitted = _strictify(fitted, anchors)
        curves.append(MonotoneCurve(fitted, inputs))
    return curves


def _insert_anchors(inputs, means, weights, level_lo, level_hi):
    """Pin (level_lo -> 0) and (level_hi -> 1), adding breakpoints if absent."""
    anchors = []
    for level, value in ((level_lo, 0.0), (level_hi, 1.0)):
        hit = np.flatnonzero(np.abs(inputs - level) < 0.5 / 255.0)
        if hit.size:
            idx = int(hit[0])
            means[idx] = value
            weights[idx] = _ANCHOR_WEIGHT
        else:
            idx = int(np.searchsorted(inputs, level))
            inputs = np.insert(inputs, idx, level)
            means = np.insert(means, idx, value)
            weights = np.insert(weights, idx, _ANCHOR_WEIGHT)
            anchors = [a + (1 if a >= idx else 0) for a in anchors]
        anchors.append(idx)
    return inputs, means, weights, tuple(anchors)


def estimate_forward_coeffs(patterns: CalibrationPatternSet,
                            captures: CalibrationCaptureSet,
                            curves):
    """Per-pixel forward coefficient matrices and composite offsets.

    Column j is the channel-j capture difference divided by the matching
    response-statistic difference; the offset is whatever remains of the
    low gray capture after the coefficient term, which makes the model
    exact at that frame by construction.
    """
    h, w = captures.gray_lo.shape[:2]
    coeffs = np.zeros((h, w, 3, 3), dtype=np.float64)
    for col, frame in enumerate(captures.channel_frames()):
        delta = frame - captures.gray_lo
        span = float(curves[col].inverse(patterns.level_hi)
                     - curves[col].inverse(patterns.level_lo))
        bad = np.abs(delta[..., col]) < EPS_DELTA
        column = delta / span
        if bad.any():
            if bad.all():
                raise CalibrationError(
                    "forward", f"every pixel is degenerate in column {col}")
            src = _nearest_valid_fill(~bad)
            column = column.reshape(h * w, 3)[src.ravel()].reshape(h, w, 3)
        coeffs[..., :, col] = column
    stat_lo = np.stack([curves[c].inverse(patterns.gray_lo[..., c])
                        for c in range(3)], axis=-1)
    offset = captures.gray_lo - np.einsum("hwij,hwj->hwi", coeffs, stat_lo)
    return coeffs, offset


def operating_regime(curves, slope_lo: float = SLOPE_LO,
                     slope_hi: float = SLOPE_HI, windows: int = 32):
    """Largest input interval where every channel's curve slope is moderate.

    Numerical slopes of the input->statistic map are measured over
    ``windows`` equal input intervals (coarser than single 8-bit levels,
    so level-to-level fit noise does not fragment the interval) and
    compared to each channel's full-range secant; windows outside
    [slope_lo, slope_hi] of the secant are rejected, and the longest
    contiguous run kept by all three channels is returned.
    """
    if not (0.0 < slope_lo < slope_hi):
        raise ValueError("need 0 < slope_lo < slope_hi")
    if windows < 2:
        raise ValueError("need at least 2 slope windows")
    grid = np.linspace(0.0, 1.0, windows + 1)
    good = np.ones(windows, dtype=bool)
    for curve in curves:
        stat = curve.inverse(grid)
        secant = (stat[-1] - stat[0]) / (grid[-1] - grid[0])
        if secant <= 0.0:
            raise CalibrationError("regime", "curve has nonpositive secant")
        rel = np.diff(stat) / np.diff(grid) / secant
        good &= (rel >= slope_lo) & (rel <= slope_hi)
    best_len, best_start, run_start = 0, -1, None
    for i, flag in enumerate(np.append(good, False)):
        if flag and run_start is None:
            run_start = i
        elif not flag and run_start is not None:
            if i - run_start > best_len:
                best_len, best_start = i - run_start, run_start
            run_start = None
    if best_len == 0:
        raise CalibrationError("regime", "no stable interval: scene uncalibratable")
    return float(grid[best_start]), float(grid[best_start + best_len])


@dataclass
class EstimatedChannelModel:
    """Calibration product: both channel directions plus the trusted interval."""

    ratios: np.ndarray          # (H, W, 3, 3), unit diagonal
    curves: list                # three MonotoneCurve, input <-> statistic
    coeffs: np.ndarray          # (H, W, 3, 3) forward coefficients
    offset: np.ndarray          # (H, W, 3) composite offsets
    regime: tuple               # trusted input interval (lo, hi)
    capture_lo: np.ndarray      # retained low gray capture
    capture_hi: np.ndarray      # retained high gray capture
    degenerate: np.ndarray      # (H, W, 3) per-column degeneracy flags
    level_lo: float = LEVEL_LO
    level_hi: float = LEVEL_HI
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    @property
    def height(self) -> int:
        return self.coeffs.shape[0]

    @property
    def width(self) -> int:
        return self.coeffs.shape[1]

    def _unmix_refs(self):
        if "inv" not in self._cache:
            inv = np.linalg.inv(self.ratios)
            lo = np.einsum("hwij,hwj->hwi", inv, self.capture_lo)
            hi = np.einsum("hwij,hwj->hwi", inv, self.capture_hi)
            denom = hi - lo
            denom = np.where(np.abs(denom) < 1e-12,
                             np.where(denom < 0, -1e-12, 1e-12), denom)
            self._cache.update(inv=inv, ref_lo=lo, denom=denom)
        return self._cache["inv"], self._cache["ref_lo"], self._cache["denom"]

    def _stat(self, illum: np.ndarray) -> np.ndarray:
        return np.stack([self.curves[c].inverse(illum[..., c])
                         for c in range(3)], axis=-1)

    def forward(self, illum) -> np.ndarray:
        """Predicted capture for an input image."""
        illum = imagecore.as_image(illum)
        if illum.shape[:2] != (self.height, self.width):
            raise ValueError("illumination does not match the calibrated grid")
        return np.einsum("hwij,hwj->hwi", self.coeffs, self._stat(illum)) \
            + self.offset

    def invert(self, capture_img) -> np.ndarray:
        """Recovered input for a capture; statistics outside the fitted
        range clamp to the curve endpoints."""
        capture_img = imagecore.as_image(capture_img)
        if capture_img.shape[:2] != (self.height, self.width):
            raise ValueError("capture does not match the calibrated grid")
        inv, ref_lo, denom = self._unmix_refs()
        unmixed = np.einsum("hwij,hwj->hwi", inv, capture_img)
        stat = (unmixed - ref_lo) / denom
        return np.stack([self.curves[c](stat[..., c]) for c in range(3)], axis=-1)


def invert(model: EstimatedChannelModel, capture_img) -> np.ndarray:
    """Module-level alias for :meth:`EstimatedChannelModel.invert`."""
    return model.invert(capture_img)


def calibrate(captures: CalibrationCaptureSet,
              patterns: CalibrationPatternSet) -> EstimatedChannelModel:
    """Run every estimation stage and assemble the model.

    Stage failures surface as :class:`CalibrationError` with the stage
    name.  Estimation is deterministic: equal captures give bitwise
    equal models.
    """
    ratios, degenerate = estimate_color_ratios(captures)
    curves = fit_response_curves(patterns, captures, ratios)
    coeffs, offset = estimate_forward_coeffs(patterns, captures, curves)
    regime = operating_regime(curves)
    return EstimatedChannelModel(
        ratios=ratios, curves=curves, coeffs=coeffs, offset=offset,
        regime=regime, capture_lo=captures.gray_lo, capture_hi=captures.gray_hi,
        degenerate=degenerate,
        level_lo=patterns.level_lo, level_hi=patterns.level_hi)


# --- serialization ---------------------------------------------------------

_RATIO_FILES = ("ratio_row_r.opt1", "ratio_row_g.opt1", "ratio_row_b.opt1")
_COEFF_FILES = ("coeff_row_r.opt1", "coeff_row_g.opt1", "coeff_row_b.opt1")


def save_estimated_model(model: EstimatedChannelModel, dirpath) -> None:
    """Write tensors for the per-pixel fields, a text table for the curves."""
    from .optics import write_header

    os.makedirs(dirpath, exist_ok=True)
    write_header(os.path.join(dirpath, "header.txt"), [
        ("width", model.width), ("height", model.height),
        ("level_lo", model.level_lo), ("level_hi", model.level_hi),
        ("regime_lo", model.regime[0]), ("regime_hi", model.regime[1]),
    ])
    for row in range(3):
        imagecore.save_tensor(model.ratios[..., row, :],
                              os.path.join(dirpath, _RATIO_FILES[row]))
        imagecore.save_tensor(model.coeffs[..., row, :],
                              os.path.join(dirpath, _COEFF_FILES[row]))
    imagecore.save_tensor(model.offset, os.path.join(dirpath, "offset.opt1"))
    imagecore.save_tensor(model.capture_lo, os.path.join(dirpath, "capture_lo.opt1"))
    imagecore.save_tensor(model.capture_hi, os.path.join(dirpath, "capture_hi.opt1"))
    imagecore.save_tensor(model.degenerate.astype(np.float64),
                          os.path.join(dirpath, "degenerate.opt1"))
    with open(os.path.join(dirpath, "curves.txt"), "w") as fh:
        fh.write("# channel statistic input\n")
        for chan, curve in enumerate(model.curves):
            for xv, yv in zip(curve.x, curve.y):
                fh.write(f"{chan} {float(xv)!r} {float(yv)!r}\n")


def load_estimated_model(dirpath) -> EstimatedChannelModel:
    from .optics import read_header

    header = read_header(os.path.join(dirpath, "header.txt"))
    ratios = np.stack([imagecore.load_tensor(os.path.join(dirpath, f))
                       for f in _RATIO_FILES], axis=2)
    coeffs = np.stack([imagecore.load_tensor(os.path.join(dirpath, f))
                       for f in _COEFF_FILES], axis=2)
    offset = imagecore.load_tensor(os.path.join(dirpath, "offset.opt1"))
    cap_lo = imagecore.load_tensor(os.path.join(dirpath, "capture_lo.opt1"))
    cap_hi = imagecore.load_tensor(os.path.join(dirpath, "capture_hi.opt1"))
    degenerate = imagecore.load_tensor(
        os.path.join(dirpath, "degenerate.opt1")) > 0.5
    points = {0: ([], []), 1: ([], []), 2: ([], [])}
    with open(os.path.join(dirpath, "curves.txt")) as fh:
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            chan, xv, yv = line.split()
            points[int(chan)][0].append(float(xv))
            points[int(chan)][1].append(float(yv))
    curves = [MonotoneCurve(points[c][0], points[c][1]) for c in range(3)]
    return EstimatedChannelModel(
        ratios=ratios, curves=curves, coeffs=coeffs, offset=offset,
        regime=(float(header["regime_lo"]), float(header["regime_hi"])),
        capture_lo=cap_lo, capture_hi=cap_hi, degenerate=degenerate,
        level_lo=float(header["level_lo"]), level_hi=float(header["level_hi"]))
