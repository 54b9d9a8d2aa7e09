"""Ground-truth projector-camera channel.

The channel maps a projector input image f to a camera capture g in two
stages: a per-channel monotone radiometric curve applied independently
at every pixel, then a spatially varying per-pixel affine color map
(3x3 mixing matrix plus additive offset).  Scene synthesis produces
channels of controlled difficulty: well-conditioned mixing (matte),
near-singular mixing (glossy), and offsets that drive the capture into
saturation (saturated).
"""

from dataclasses import dataclass, field

import numpy as np
from scipy.ndimage import gaussian_filter

from . import imagecore

MATERIALS = ("matte", "glossy", "saturated", "mixed")


@dataclass(frozen=True)
class RadiometricResponse:
    """Per-channel monotone curve gain * x**gamma with gain in (0,1], gamma >= 1."""

    gain: np.ndarray
    gamma: np.ndarray

    def __post_init__(self):
        gain = np.asarray(self.gain, dtype=np.float64).reshape(3)
        gamma = np.asarray(self.gamma, dtype=np.float64).reshape(3)
        if np.any(gain <= 0.0) or np.any(gain > 1.0):
            raise ValueError("gain must lie in (0, 1]")
        if np.any(gamma < 1.0):
            raise ValueError("gamma must be >= 1")
        object.__setattr__(self, "gain", gain)
        object.__setattr__(self, "gamma", gamma)

    @classmethod
    def identity(cls):
        return cls(np.ones(3), np.ones(3))

    def __call__(self, values) -> np.ndarray:
        """Apply the curve along the last (channel) axis."""
        return self.gain * np.power(values, self.gamma)

    def inverse(self, output) -> np.ndarray:
        """Invert the curve; out-of-range outputs clamp to the curve's range."""
        scaled = np.clip(np.asarray(output, dtype=np.float64) / self.gain, 0.0, 1.0)
        return np.power(scaled, 1.0 / self.gamma)


@dataclass(frozen=True)
class SpectralField:
    """Per-pixel 3x3 mixing matrices and nonnegative offsets."""

    mixing: np.ndarray  # (H, W, 3, 3)
    offset: np.ndarray  # (H, W, 3)

    def __post_init__(self):
        mixing = np.asarray(self.mixing, dtype=np.float64)
        offset = np.asarray(self.offset, dtype=np.float64)
        if mixing.ndim != 4 or mixing.shape[2:] != (3, 3):
            raise ValueError(f"mixing must be (H, W, 3, 3), got {mixing.shape}")
        if offset.shape != mixing.shape[:2] + (3,):
            raise ValueError("offset grid does not match mixing grid")
        if np.any(mixing < 0.0) or np.any(offset < 0.0):
            raise ValueError("mixing and offset entries must be nonnegative")
        diag = mixing[..., (0, 1, 2), (0, 1, 2)]
        if np.any(diag <= 0.0):
            raise ValueError("mixing diagonals must be strictly positive")
        object.__setattr__(self, "mixing", mixing)
        object.__setattr__(self, "offset", offset)


@dataclass
class ChannelModel:
    """Ground-truth channel: radiometric curve composed with the spectral field."""

    response: RadiometricResponse
    spectral: SpectralField
    _mixing_inv: np.ndarray = field(default=None, repr=False, compare=False)

    @property
    def height(self) -> int:
        return self.spectral.mixing.shape[0]

    @property
    def width(self) -> int:
        return self.spectral.mixing.shape[1]

    @property
    def regime(self) -> tuple:
        """Admissible projector-input interval; the true channel accepts all of [0, 1]."""
        return (0.0, 1.0)

    def forward(self, illum) -> np.ndarray:
        return forward(self, illum)

    def invert(self, capture_img) -> np.ndarray:
        """Analytic inverse: unmix, then invert the radiometric curve.

        Out-of-range intermediate brightness clamps to the curve's range,
        so the result always lies in [0, 1].
        """
        capture_img = imagecore.as_image(capture_img)
        if self._mixing_inv is None:
            self._mixing_inv = np.linalg.inv(self.spectral.mixing)
        bright = np.einsum("hwij,hwj->hwi", self._mixing_inv,
                           capture_img - self.spectral.offset)
        return self.response.inverse(bright)


@dataclass(frozen=True)
class SceneSpec:
    """Recipe for a synthetic scene of controlled difficulty."""

    width: int
    height: int
    material: str = "matte"
    gamma_range: tuple = (1.8, 2.4)
    mix_diag: float = 0.7  # diagonal fraction of each mixing row
    offset_scale: float = 0.05
    smoothness: float = 8.0  # spatial correlation length in pixels
    seed: int = 0

    def __post_init__(self):
        if self.width < 1 or self.height < 1:
            raise ValueError("scene grid must be at least 1x1")
        if self.material not in MATERIALS:
            raise ValueError(f"unknown material {self.material!r}")
        lo, hi = self.gamma_range
        if not (1.0 <= lo <= hi):
            raise ValueError("gamma_range must satisfy 1 <= lo <= hi")
        if not (0.0 < self.mix_diag <= 1.0):
            raise ValueError("mix_diag must lie in (0, 1]")
        if self.offset_scale < 0.0 or self.smoothness < 0.0:
            raise ValueError("scales must be nonnegative")


@dataclass(frozen=True)
class NoiseSpec:
    """Capture realism knobs: Gaussian read noise and 8-bit quantization."""

    sigma: float = 0.0
    quantize: bool = False
    seed: int = 0

    def __post_init__(self):
        if self.sigma < 0.0:
            raise ValueError("sigma must be nonnegative")


NOISELESS = NoiseSpec()


def apply_radiometric(response: RadiometricResponse, illum) -> np.ndarray:
    """Apply the per-channel curve at every pixel; channels never mix."""
    illum = imagecore.as_image(illum)
    if illum.min() < 0.0 or illum.max() > 1.0:
        raise ValueError("radiometric input must lie in [0, 1]")
    return response(illum)


def forward(model: ChannelModel, illum) -> np.ndarray:
    """Full channel: g(x) = V(x) @ M(f(x)) + b(x), with no cross-pixel coupling."""
    illum = imagecore.as_image(illum)
    if illum.shape[:2] != (model.height, model.width):
        raise ValueError(f"illumination {illum.shape[:2]} does not match "
                         f"model grid {(model.height, model.width)}")
    bright = apply_radiometric(model.response, illum)
    return np.einsum("hwij,hwj->hwi", model.spectral.mixing, bright) \
        + model.spectral.offset


def capture(model: ChannelModel, illum, noise: NoiseSpec = NOISELESS) -> np.ndarray:
    """Simulated camera capture: forward, add noise, clip to [0,1], quantize."""
    img = forward(model, illum)
    if noise.sigma > 0.0:
        rng = np.random.default_rng(noise.seed)
        img = img + rng.normal(0.0, noise.sigma, size=img.shape)
    img = np.clip(img, 0.0, 1.0)
    if noise.quantize:
        img = np.floor(img * 255.0 + 0.5) / 255.0
    return img


def _smooth_unit_fields(rng, height, width, length, count) -> np.ndarray:
    """Spatially smooth random fields, rescaled to [0, 1] per component."""
    raw = rng.standard_normal((height, width, count))
    if length > 0.0 and min(height, width) > 1:
        raw = gaussian_filter(raw, sigma=(length, length, 0.0), mode="reflect")
    lo = raw.min(axis=(0, 1), keepdims=True)
    hi = raw.max(axis=(0, 1), keepdims=True)
    span = np.where(hi - lo < 1e-12, 1.0, hi - lo)
    return (raw - lo) / span


def _matte_field(rng, spec: SceneSpec, gain: np.ndarray):
    """Diagonally dominant mixing with small offsets; capture stays under 1."""
    h, w = spec.height, spec.width
    u = _smooth_unit_fields(rng, h, w, spec.smoothness, 12)
    offset = spec.offset_scale * (0.3 + 0.7 * u[..., 9:12])
    # Per-row response budget keeps gain*rowsum + offset <= ~0.98 pre-clip.
    budget = 0.72 + 0.22 * u[..., 0:3]
    rowsum = np.maximum(0.02, np.minimum(budget, 0.98 - offset)) / gain
    frac = spec.mix_diag  # off-diagonal total <= diag*(1-frac)/frac by construction
    mix = np.zeros((h, w, 3, 3))
    for row in range(3):
        split = u[..., 3 + row]  # share of the off-diagonal budget actually used
        lean = u[..., 6 + row]   # how that share splits between the two columns
        off_total = rowsum[..., row] * (1.0 - frac) * (0.15 + 0.85 * split)
        diag = rowsum[..., row] - off_total
        cols = [c for c in range(3) if c != row]
        mix[..., row, cols[0]] = off_total * (0.15 + 0.7 * lean)
        mix[..., row, cols[1]] = off_total - mix[..., row, cols[0]]
        mix[..., row, row] = diag
    return mix, offset


def _glossy_field(rng, spec: SceneSpec, gain: np.ndarray):
    """Near-rank-1 mixing: smallest singular value far below the largest."""
    h, w = spec.height, spec.width
    u = _smooth_unit_fields(rng, h, w, spec.smoothness, 9)
    left = 0.35 + 0.65 * u[..., 0:3]
    right = 0.35 + 0.65 * u[..., 3:6]
    mix = left[..., :, None] * right[..., None, :]
    eye = np.eye(3)
    mix = mix + 1e-4 * (0.5 + u[..., 6:9])[..., :, None] * eye
    offset = spec.offset_scale * (0.3 + 0.7 * u[..., 6:9])
    # Match the matte response budget so hardness is a shape, not a scale, effect.
    budget = 0.72 + 0.22 * u[..., 0:3]
    rowsum = mix.sum(axis=3)
    scale = np.maximum(0.02, np.minimum(budget, 0.98 - offset)) / (gain * rowsum)
    mix = mix * scale[..., :, None]
    return mix, offset


def _saturated_field(rng, spec: SceneSpec, gain: np.ndarray):
    """Large background offsets push captures against the sensor ceiling."""
    h, w = spec.height, spec.width
    u = _smooth_unit_fields(rng, h, w, spec.smoothness, 9)
    offset = 0.80 + 0.14 * u[..., 0:3]
    mix, _ = _matte_field(rng, spec, gain)
    # Rescale rows to honor the <=1.2 pre-clip bound next to the big offsets.
    rowsum = mix.sum(axis=3)
    scale = np.minimum(1.0, (1.18 - offset) / (gain * rowsum))
    mix = mix * scale[..., :, None]
    return mix, offset


def synth_scene(spec: SceneSpec) -> ChannelModel:
    """Deterministic scene synthesis; equal seeds give identical channels."""
    seeds = np.random.SeedSequence(spec.seed).spawn(5)
    rng_shared = np.random.default_rng(seeds[0])
    lo, hi = spec.gamma_range
    gamma = rng_shared.uniform(lo, hi, 3)
    gain = rng_shared.uniform(0.8, 1.0, 3)
    response = RadiometricResponse(gain, gamma)

    if spec.material == "matte":
        mix, offset = _matte_field(np.random.default_rng(seeds[1]), spec, gain)
    elif spec.material == "glossy":
        mix, offset = _glossy_field(np.random.default_rng(seeds[2]), spec, gain)
    elif spec.material == "saturated":
        mix, offset = _saturated_field(np.random.default_rng(seeds[3]), spec, gain)
    else:  # mixed: smooth blend of matte and glossy, saturated blobs on top
        mix_m, off_m = _matte_field(np.random.default_rng(seeds[1]), spec, gain)
        mix_g, off_g = _glossy_field(np.random.default_rng(seeds[2]), spec, gain)
        mix_s, off_s = _saturated_field(np.random.default_rng(seeds[3]), spec, gain)
        rng_mask = np.random.default_rng(seeds[4])
        masks = _smooth_unit_fields(rng_mask, spec.height, spec.width,
                                    spec.smoothness, 2)
        blend = masks[..., 0]
        mix = (1.0 - blend)[..., None, None] * mix_m + blend[..., None, None] * mix_g
        offset = (1.0 - blend)[..., None] * off_m + blend[..., None] * off_g
        hot = masks[..., 1] > 0.85
        mix[hot] = mix_s[hot]
        offset[hot] = off_s[hot]

    # Global guarantee: forward of any admissible input stays <= 1.2 pre-clip.
    peak = gain * mix.sum(axis=3) + offset
    over = peak > 1.2
    if np.any(over):
        scale = np.where(over, (1.2 - offset) / (peak - offset), 1.0)
        mix = mix * scale[..., :, None]
    return ChannelModel(response, SpectralField(mix, offset))


# --- serialization ---------------------------------------------------------

_HEADER_NAME = "header.txt"
_ROW_FILES = ("mix_row_r.opt1", "mix_row_g.opt1", "mix_row_b.opt1")
_OFFSET_FILE = "offset.opt1"


def write_header(path, pairs) -> None:
    with open(path, "w") as fh:
        for key, value in pairs:
            value = repr(float(value)) if isinstance(value, float) else value
            fh.write(f"{key} = {value}\n")


def read_header(path) -> dict:
    out = {}
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            key, _, value = line.partition("=")
            out[key.strip()] = value.strip().strip("'\"")
    return out


def save_channel_model(model: ChannelModel, dirpath) -> None:
    """Write the channel to a directory: one tensor per mixing row plus offsets."""
    import os

    os.makedirs(dirpath, exist_ok=True)
    pairs = [("width", model.width), ("height", model.height)]
    for idx, name in enumerate("rgb"):
        pairs.append((f"gamma_{name}", float(model.response.gamma[idx])))
        pairs.append((f"gain_{name}", float(model.response.gain[idx])))
    write_header(os.path.join(dirpath, _HEADER_NAME), pairs)
    for row, fname in enumerate(_ROW_FILES):
        imagecore.save_tensor(model.spectral.mixing[..., row, :],
                              os.path.join(dirpath, fname))
    imagecore.save_tensor(model.spectral.offset, os.path.join(dirpath, _OFFSET_FILE))


def load_channel_model(dirpath) -> ChannelModel:
    import os

    header = read_header(os.path.join(dirpath, _HEADER_NAME))
    gamma = [float(header[f"gamma_{c}"]) for c in "rgb"]
    gain = [float(header[f"gain_{c}"]) for c in "rgb"]
    rows = [imagecore.load_tensor(os.path.join(dirpath, f)) for f in _ROW_FILES]
    mixing = np.stack(rows, axis=2)
    offset = imagecore.load_tensor(os.path.join(dirpath, _OFFSET_FILE))
    return ChannelModel(RadiometricResponse(gain, gamma),
                        SpectralField(mixing, offset))
