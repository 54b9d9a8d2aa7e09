"""Image containers, color arithmetic, norms, and bit-exact file I/O.

An image is a C-contiguous float64 array of shape (height, width, 3),
i.e. channel-interleaved row-major RGB with nominal intensity range
[0, 1].  Every other module consumes this one layout.
"""

import struct

import numpy as np
from PIL import Image as _PilImage

TENSOR_MAGIC = b"OPT1"
_MAX_ELEMENTS = 1 << 31  # header sanity bound for width*height*3


def as_image(data) -> np.ndarray:
    """Coerce ``data`` to the (H, W, 3) float64 layout, validating shape."""
    arr = np.ascontiguousarray(data, dtype=np.float64)
    if arr.ndim != 3 or arr.shape[2] != 3:
        raise ValueError(f"expected (H, W, 3) image data, got shape {arr.shape}")
    if arr.shape[0] < 1 or arr.shape[1] < 1:
        raise ValueError("image must be at least 1x1")
    return arr


def uniform(height: int, width: int, value) -> np.ndarray:
    """Uniform image: every pixel set to ``value`` (scalar or RGB triple)."""
    img = np.empty((height, width, 3), dtype=np.float64)
    img[...] = value
    return as_image(img)


def load_png(path) -> np.ndarray:
    """Load an 8-bit RGB PNG; byte v maps to v/255 exactly."""
    with open(path, "rb") as fh:
        try:
            pil = _PilImage.open(fh)
            pil.load()
        except _PilImage.UnidentifiedImageError as exc:
            raise ValueError(f"{path}: not a PNG file") from exc
    if pil.format != "PNG":
        raise ValueError(f"{path}: expected PNG, got {pil.format}")
    if pil.mode != "RGB":
        raise ValueError(f"{path}: expected 8-bit RGB PNG, got mode {pil.mode}")
    return np.asarray(pil, dtype=np.float64) / 255.0


def save_png(img, path) -> None:
    """Write an 8-bit RGB PNG; value v maps to round-half-up(v*255).

    Values must already lie in [0, 1]; callers clip first.
    """
    img = as_image(img)
    if img.min() < 0.0 or img.max() > 1.0:
        raise ValueError("save_png requires values in [0, 1]; clip first")
    quantized = np.floor(img * 255.0 + 0.5)
    quantized = np.clip(quantized, 0, 255).astype(np.uint8)
    _PilImage.fromarray(quantized, mode="RGB").save(path, format="PNG")


def save_tensor(img, path) -> None:
    """Write the lossless float interchange file (magic ``OPT1``).

    Layout: 4 magic bytes, width/height/channels as u32 little-endian
    (channels is always 3), then float32 LE samples, row-major and
    channel-interleaved.  Math runs in float64 internally; narrowing to
    float32 happens only here, at the file boundary.
    """
    img = as_image(img)
    height, width = img.shape[:2]
    with open(path, "wb") as fh:
        fh.write(TENSOR_MAGIC)
        fh.write(struct.pack("<III", width, height, 3))
        fh.write(np.ascontiguousarray(img, dtype="<f4").tobytes())


def load_tensor(path) -> np.ndarray:
    """Read a file written by :func:`save_tensor`, bit-exactly."""
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < 16:
        raise ValueError(f"{path}: truncated header")
    if blob[:4] != TENSOR_MAGIC:
        raise ValueError(f"{path}: bad magic {blob[:4]!r}")
    width, height, channels = struct.unpack("<III", blob[4:16])
    if channels != 3:
        raise ValueError(f"{path}: expected 3 channels, got {channels}")
    if width < 1 or height < 1 or width * height * 3 > _MAX_ELEMENTS:
        raise ValueError(f"{path}: dimension overflow ({width}x{height})")
    expected = width * height * 3 * 4
    payload = blob[16:]
    if len(payload) < expected:
        raise ValueError(f"{path}: truncated payload "
                         f"({len(payload)} of {expected} bytes)")
    if len(payload) > expected:
        raise ValueError(f"{path}: trailing bytes after payload")
    data = np.frombuffer(payload, dtype="<f4").astype(np.float64)
    return data.reshape(height, width, 3)


def clip(img, lo: float, hi: float) -> np.ndarray:
    """Clamp every component to [lo, hi]."""
    if lo > hi:
        raise ValueError(f"clip bounds inverted: {lo} > {hi}")
    return np.clip(as_image(img), lo, hi)


def dist(a, b, norm: str) -> float:
    """Distance between two images of identical dimensions.

    ``linf`` is the max absolute componentwise difference;
    ``l2_normalized`` is sqrt(mean of squared componentwise differences).
    """
    a = as_image(a)
    b = as_image(b)
    if a.shape != b.shape:
        raise ValueError(f"dimension mismatch: {a.shape} vs {b.shape}")
    diff = a - b
    if norm == "linf":
        return float(np.max(np.abs(diff)))
    if norm == "l2_normalized":
        return float(np.sqrt(np.mean(diff * diff)))
    raise ValueError(f"unknown norm {norm!r}")
