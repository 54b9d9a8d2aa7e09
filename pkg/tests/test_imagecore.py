import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from opad import imagecore


def test_load_png_exact_scaling(tmp_path):
    from PIL import Image

    path = tmp_path / "one.png"
    Image.fromarray(np.array([[[255, 0, 128]]], dtype=np.uint8), "RGB").save(path)
    img = imagecore.load_png(path)
    assert img.shape == (1, 1, 3)
    assert img[0, 0, 0] == 1.0
    assert img[0, 0, 1] == 0.0
    assert img[0, 0, 2] == 128 / 255


def test_load_png_zeros(tmp_path):
    from PIL import Image

    path = tmp_path / "zero.png"
    Image.fromarray(np.zeros((2, 2, 3), dtype=np.uint8), "RGB").save(path)
    assert np.all(imagecore.load_png(path) == 0.0)


def test_png_round_trip_byte_identical(tmp_path):
    rng = np.random.default_rng(0)
    img = rng.integers(0, 256, (7, 5, 3)).astype(np.float64) / 255.0
    p1, p2 = tmp_path / "a.png", tmp_path / "b.png"
    imagecore.save_png(img, p1)
    imagecore.save_png(imagecore.load_png(p1), p2)
    assert p1.read_bytes() == p2.read_bytes()


def test_save_png_round_half_up(tmp_path):
    from PIL import Image

    path = tmp_path / "half.png"
    imagecore.save_png(np.full((1, 1, 3), 0.5), path)
    assert np.all(np.asarray(Image.open(path)) == 128)
    imagecore.save_png(np.array([[[1.0, 0.0, 1.0]]]), path)
    assert tuple(np.asarray(Image.open(path))[0, 0]) == (255, 0, 255)


def test_save_png_rejects_out_of_range(tmp_path):
    with pytest.raises(ValueError, match="clip"):
        imagecore.save_png(np.full((1, 1, 3), 1.2), tmp_path / "x.png")


def test_load_png_rejects_non_rgb(tmp_path):
    from PIL import Image

    rgba = tmp_path / "a.png"
    Image.fromarray(np.zeros((2, 2, 4), dtype=np.uint8), "RGBA").save(rgba)
    with pytest.raises(ValueError, match="mode"):
        imagecore.load_png(rgba)
    jpg = tmp_path / "a.jpg"
    Image.fromarray(np.zeros((2, 2, 3), dtype=np.uint8), "RGB").save(jpg, "JPEG")
    with pytest.raises(ValueError):
        imagecore.load_png(jpg)


def test_load_png_missing_file(tmp_path):
    with pytest.raises(FileNotFoundError):
        imagecore.load_png(tmp_path / "nope.png")


def test_tensor_round_trip_bits(tmp_path):
    # 1/3 as the format stores it: float32, widened back to float64
    value = float(np.float64(np.float32(1.0 / 3.0)))
    img = np.full((2, 3, 3), value)
    path = tmp_path / "t.opt1"
    imagecore.save_tensor(img, path)
    back = imagecore.load_tensor(path)
    assert back.dtype == np.float64
    assert np.array_equal(back, img)


def test_tensor_save_load_save_identical(tmp_path):
    rng = np.random.default_rng(1)
    img = rng.uniform(-2.0, 2.0, (4, 6, 3))
    p1, p2 = tmp_path / "a.opt1", tmp_path / "b.opt1"
    imagecore.save_tensor(img, p1)
    imagecore.save_tensor(imagecore.load_tensor(p1), p2)
    assert p1.read_bytes() == p2.read_bytes()


def test_tensor_header_layout(tmp_path):
    path = tmp_path / "t.opt1"
    imagecore.save_tensor(np.zeros((2, 5, 3)), path)
    blob = path.read_bytes()
    assert blob[:4] == b"OPT1"
    assert int.from_bytes(blob[4:8], "little") == 5   # width
    assert int.from_bytes(blob[8:12], "little") == 2  # height
    assert int.from_bytes(blob[12:16], "little") == 3
    assert len(blob) == 16 + 2 * 5 * 3 * 4


def test_tensor_error_paths(tmp_path):
    empty = tmp_path / "empty.opt1"
    empty.write_bytes(b"")
    with pytest.raises(ValueError, match="truncated"):
        imagecore.load_tensor(empty)

    bad_magic = tmp_path / "bad.opt1"
    bad_magic.write_bytes(b"NOPE" + b"\x00" * 20)
    with pytest.raises(ValueError, match="magic"):
        imagecore.load_tensor(bad_magic)

    good = tmp_path / "good.opt1"
    imagecore.save_tensor(np.zeros((2, 2, 3)), good)
    truncated = tmp_path / "trunc.opt1"
    truncated.write_bytes(good.read_bytes()[:-5])
    with pytest.raises(ValueError, match="truncated payload"):
        imagecore.load_tensor(truncated)

    import struct

    huge = tmp_path / "huge.opt1"
    huge.write_bytes(b"OPT1" + struct.pack("<III", 2 ** 30, 2 ** 30, 3))
    with pytest.raises(ValueError, match="overflow"):
        imagecore.load_tensor(huge)


def test_clip_basic():
    img = np.array([[[-0.1, 0.5, 1.2]]])
    assert np.array_equal(imagecore.clip(img, 0.0, 1.0),
                          np.array([[[0.0, 0.5, 1.0]]]))
    assert np.array_equal(imagecore.clip(np.array([[[0.05, 0.5, 0.95]]]), 0.1, 0.9),
                          np.array([[[0.1, 0.5, 0.9]]]))
    with pytest.raises(ValueError):
        imagecore.clip(img, 1.0, 0.0)


@given(st.lists(st.floats(-10, 10), min_size=3, max_size=3))
def test_clip_idempotent(vals):
    img = np.array([[vals]])
    once = imagecore.clip(img, 0.0, 1.0)
    assert np.array_equal(imagecore.clip(once, 0.0, 1.0), once)


def test_dist_definitions():
    a = np.array([[[1.0, 0.0, 0.0]]])
    b = np.zeros((1, 1, 3))
    assert imagecore.dist(a, a, "linf") == 0.0
    assert imagecore.dist(a, a, "l2_normalized") == 0.0
    assert imagecore.dist(a, b, "linf") == 1.0
    assert imagecore.dist(a, b, "l2_normalized") == pytest.approx(np.sqrt(1 / 3))
    with pytest.raises(ValueError):
        imagecore.dist(a, np.zeros((2, 1, 3)), "linf")
    with pytest.raises(ValueError):
        imagecore.dist(a, b, "l7")


def test_dist_matches_independent_summation():
    rng = np.random.default_rng(2)
    a = rng.uniform(0, 1, (5, 4, 3))
    b = rng.uniform(0, 1, (5, 4, 3))
    total = 0.0
    worst = 0.0
    for i in range(5):
        for j in range(4):
            for c in range(3):
                d = a[i, j, c] - b[i, j, c]
                total += d * d
                worst = max(worst, abs(d))
    assert imagecore.dist(a, b, "l2_normalized") == pytest.approx(
        np.sqrt(total / 60), abs=1e-12)
    assert imagecore.dist(a, b, "linf") == pytest.approx(worst, abs=1e-12)


@settings(max_examples=40)
@given(st.integers(0, 2 ** 31))
def test_dist_symmetry_and_triangle(seed):
    rng = np.random.default_rng(seed)
    a, b, c = (rng.uniform(-1, 1, (3, 3, 3)) for _ in range(3))
    for norm in ("linf", "l2_normalized"):
        assert imagecore.dist(a, b, norm) == pytest.approx(
            imagecore.dist(b, a, norm), abs=1e-9)
        assert imagecore.dist(a, c, norm) <= (
            imagecore.dist(a, b, norm) + imagecore.dist(b, c, norm) + 1e-9)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2 ** 31), st.integers(1, 6), st.integers(1, 6))
def test_png_round_trip_property(seed, h, w):
    import tempfile

    rng = np.random.default_rng(seed)
    img = rng.integers(0, 256, (h, w, 3)).astype(np.float64) / 255.0
    with tempfile.TemporaryDirectory() as tmp:
        path = f"{tmp}/t.png"
        imagecore.save_png(img, path)
        assert np.array_equal(imagecore.load_png(path), img)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2 ** 31))
def test_tensor_round_trip_property(seed):
    import tempfile

    rng = np.random.default_rng(seed)
    img = rng.uniform(-1e6, 1e6, (3, 4, 3)).astype(np.float32).astype(np.float64)
    with tempfile.TemporaryDirectory() as tmp:
        path = f"{tmp}/t.opt1"
        imagecore.save_tensor(img, path)
        assert np.array_equal(imagecore.load_tensor(path), img)


def test_uniform_and_as_image_validation():
    img = imagecore.uniform(2, 3, 0.25)
    assert img.shape == (2, 3, 3)
    assert np.all(img == 0.25)
    with pytest.raises(ValueError):
        imagecore.as_image(np.zeros((2, 3)))
    with pytest.raises(ValueError):
        imagecore.as_image(np.zeros((0, 3, 3)))
