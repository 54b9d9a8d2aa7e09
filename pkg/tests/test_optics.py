import numpy as np
import pytest

from opad import imagecore, optics


def identity_channel(h=4, w=4):
    return optics.ChannelModel(
        optics.RadiometricResponse.identity(),
        optics.SpectralField(np.broadcast_to(np.eye(3), (h, w, 3, 3)).copy(),
                             np.zeros((h, w, 3))))


def test_radiometric_identity_and_square():
    rng = np.random.default_rng(0)
    f = rng.uniform(0, 1, (3, 3, 3))
    ident = optics.RadiometricResponse.identity()
    assert np.array_equal(optics.apply_radiometric(ident, f), f)

    square = optics.RadiometricResponse(np.ones(3), np.full(3, 2.0))
    half = imagecore.uniform(2, 2, 0.5)
    assert np.allclose(optics.apply_radiometric(square, half), 0.25)


def test_radiometric_monotonic_pairs():
    rng = np.random.default_rng(1)
    resp = optics.RadiometricResponse(rng.uniform(0.5, 1.0, 3),
                                      rng.uniform(1.0, 2.4, 3))
    f = rng.uniform(0, 0.9, (4, 4, 3))
    bigger = np.clip(f + rng.uniform(0, 0.1, f.shape), 0, 1)
    assert np.all(resp(bigger) >= resp(f))


def test_radiometric_validation():
    with pytest.raises(ValueError):
        optics.RadiometricResponse(np.zeros(3), np.ones(3))
    with pytest.raises(ValueError):
        optics.RadiometricResponse(np.ones(3), np.full(3, 0.5))
    with pytest.raises(ValueError):
        optics.apply_radiometric(optics.RadiometricResponse.identity(),
                                 np.full((1, 1, 3), 1.5))


def test_forward_identity_channel():
    model = identity_channel()
    rng = np.random.default_rng(2)
    f = rng.uniform(0, 1, (4, 4, 3))
    assert np.array_equal(optics.forward(model, f), f)


def test_forward_single_pixel_arithmetic():
    mixing = np.array([[[[0.8, 0.1, 0.05], [0.05, 0.7, 0.1], [0.02, 0.08, 0.6]]]])
    offset = np.full((1, 1, 3), 0.05)
    model = optics.ChannelModel(optics.RadiometricResponse.identity(),
                                optics.SpectralField(mixing, offset))
    g = optics.forward(model, imagecore.uniform(1, 1, 0.5))
    assert np.allclose(g[0, 0], [0.525, 0.475, 0.40], atol=1e-12)


def test_forward_offset_affinity():
    scene = optics.synth_scene(optics.SceneSpec(6, 5, "matte", seed=3))
    bare = optics.ChannelModel(
        scene.response,
        optics.SpectralField(scene.spectral.mixing,
                             np.zeros_like(scene.spectral.offset)))
    rng = np.random.default_rng(3)
    f = rng.uniform(0, 1, (5, 6, 3))
    diff = optics.forward(scene, f) - optics.forward(bare, f)
    assert np.allclose(diff, scene.spectral.offset, atol=1e-12)


def test_forward_affine_combination_identity_response():
    spec = optics.SceneSpec(5, 5, "matte", gamma_range=(1.0, 1.0), seed=4)
    scene = optics.synth_scene(spec)
    scene = optics.ChannelModel(optics.RadiometricResponse.identity(),
                                scene.spectral)
    rng = np.random.default_rng(4)
    f1 = rng.uniform(0, 1, (5, 5, 3))
    f2 = rng.uniform(0, 1, (5, 5, 3))
    lam = 0.3
    mixed = optics.forward(scene, lam * f1 + (1 - lam) * f2)
    combo = lam * optics.forward(scene, f1) + (1 - lam) * optics.forward(scene, f2)
    assert np.allclose(mixed, combo, atol=1e-12)


def test_forward_pixel_permutation_equivariance():
    scene = optics.synth_scene(optics.SceneSpec(4, 4, "matte", seed=5))
    rng = np.random.default_rng(5)
    f = rng.uniform(0, 1, (4, 4, 3))
    perm = rng.permutation(16)
    g = optics.forward(scene, f)
    shuffled = optics.ChannelModel(
        scene.response,
        optics.SpectralField(
            scene.spectral.mixing.reshape(16, 3, 3)[perm].reshape(4, 4, 3, 3),
            scene.spectral.offset.reshape(16, 3)[perm].reshape(4, 4, 3)))
    g_perm = optics.forward(shuffled, f.reshape(16, 3)[perm].reshape(4, 4, 3))
    assert np.allclose(g_perm, g.reshape(16, 3)[perm].reshape(4, 4, 3), atol=1e-14)


def test_forward_monotone_in_each_channel():
    scene = optics.synth_scene(optics.SceneSpec(4, 4, "matte", seed=6))
    rng = np.random.default_rng(6)
    f = rng.uniform(0, 0.8, (4, 4, 3))
    bumped = f.copy()
    bumped[..., 0] = np.clip(bumped[..., 0] + 0.1, 0, 1)
    assert np.all(optics.forward(scene, bumped) >= optics.forward(scene, f) - 1e-12)


def test_synth_scene_deterministic():
    spec = optics.SceneSpec(8, 8, "mixed", seed=7)
    a = optics.synth_scene(spec)
    b = optics.synth_scene(spec)
    assert np.array_equal(a.spectral.mixing, b.spectral.mixing)
    assert np.array_equal(a.spectral.offset, b.spectral.offset)
    assert np.array_equal(a.response.gamma, b.response.gamma)


def test_matte_scene_well_conditioned():
    scene = optics.synth_scene(optics.SceneSpec(16, 16, "matte", seed=8))
    sv = np.linalg.svd(scene.spectral.mixing, compute_uv=False)
    cond = sv[..., 0] / sv[..., 2]
    assert cond.max() <= 20.0
    # diagonal dominance at the requested fraction
    mixing = scene.spectral.mixing
    diag = mixing[..., (0, 1, 2), (0, 1, 2)]
    rowsum = mixing.sum(axis=3)
    assert np.all(diag >= 0.7 * rowsum - 1e-9)


def test_glossy_scene_near_singular():
    scene = optics.synth_scene(optics.SceneSpec(16, 16, "glossy", seed=9))
    sv = np.linalg.svd(scene.spectral.mixing, compute_uv=False)
    cond = sv[..., 0] / sv[..., 2]
    assert (cond >= 100.0).mean() >= 0.9
    assert (sv[..., 2] <= 0.02 * sv[..., 0]).mean() >= 0.9


def test_saturated_scene_pushes_high():
    scene = optics.synth_scene(optics.SceneSpec(8, 8, "saturated", seed=10))
    cap = optics.capture(scene, imagecore.uniform(8, 8, 140 / 255))
    assert (cap >= 0.9).mean() > 0.5


def test_forward_bounded_before_clip():
    for material in optics.MATERIALS:
        scene = optics.synth_scene(optics.SceneSpec(8, 8, material, seed=11))
        top = optics.forward(scene, imagecore.uniform(8, 8, 1.0))
        assert top.max() <= 1.2 + 1e-9


def test_capture_noiseless_equals_forward():
    scene = optics.synth_scene(optics.SceneSpec(8, 8, "matte", seed=12))
    rng = np.random.default_rng(12)
    f = rng.uniform(0, 1, (8, 8, 3))
    assert np.array_equal(optics.capture(scene, f), optics.forward(scene, f))


def test_capture_quantization_rule():
    model = identity_channel(1, 1)
    cap = optics.capture(model, imagecore.uniform(1, 1, 0.5),
                         optics.NoiseSpec(0.0, True, 0))
    assert np.all(cap == 128 / 255)


def test_capture_noise_mean_absolute_deviation():
    model = identity_channel(64, 64)
    f = imagecore.uniform(64, 64, 0.5)
    clean = optics.forward(model, f)
    noisy = optics.capture(model, f, optics.NoiseSpec(0.01, False, 3))
    mad = np.abs(noisy - clean).mean()
    expected = 0.01 * np.sqrt(2 / np.pi)
    assert abs(mad - expected) <= 0.1 * expected


def test_capture_deterministic_in_seed():
    scene = optics.synth_scene(optics.SceneSpec(6, 6, "matte", seed=13))
    f = imagecore.uniform(6, 6, 0.4)
    spec = optics.NoiseSpec(0.02, True, 77)
    assert np.array_equal(optics.capture(scene, f, spec),
                          optics.capture(scene, f, spec))


def test_channel_invert_round_trip():
    scene = optics.synth_scene(optics.SceneSpec(8, 8, "matte", seed=14))
    rng = np.random.default_rng(14)
    f = rng.uniform(0.05, 0.95, (8, 8, 3))
    assert np.allclose(scene.invert(optics.forward(scene, f)), f, atol=1e-9)


def test_channel_model_serialization_round_trip(tmp_path):
    scene = optics.synth_scene(optics.SceneSpec(5, 7, "mixed", seed=15))
    optics.save_channel_model(scene, tmp_path / "scene")
    back = optics.load_channel_model(tmp_path / "scene")
    assert np.allclose(back.spectral.mixing, scene.spectral.mixing, atol=1e-6)
    assert np.allclose(back.spectral.offset, scene.spectral.offset, atol=1e-6)
    assert np.array_equal(back.response.gamma, scene.response.gamma)
    # second save is byte-identical
    optics.save_channel_model(back, tmp_path / "again")
    for name in ("header.txt", "mix_row_r.opt1", "offset.opt1"):
        assert (tmp_path / "scene" / name).read_bytes() == \
            (tmp_path / "again" / name).read_bytes()
