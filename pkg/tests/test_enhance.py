import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from thermforge.enhance import (
    EDGE_KERNELS,
    AlignedPair,
    DegenerateProxyWarning,
    GuidedSrConfig,
    LossWeights,
    UnalignedPairError,
    adversarial_loss,
    align_guide,
    content_loss,
    cycle_consistency_loss,
    domain_proxy,
    edge_features,
    guided_upsample,
    identity_loss,
    image_content_loss,
    mse_loss,
    shift_image,
    total_loss,
)
from thermforge.imaging import HIST_BINS, RgbFrame, upsample_bilinear
from thermforge.matching import ncc_map
from thermforge.metrics import edge_width
from thermforge.radiometry import convert_frame
from thermforge.synth import SynthConfig, edge_profile, make_scene


def gray_rgb(img):
    g = np.clip(np.round(img), 0, 255).astype(np.uint8)
    return RgbFrame(np.repeat(g[..., None], 3, axis=2))


@pytest.fixture(scope="module")
def scene():
    s = make_scene(0, 1)
    lo = convert_frame(s.thermal_lo, SynthConfig().params).celsius
    return s, lo


def aligned_rgb(scene, factor=4):
    sx, sy = scene.rgb_shift
    return RgbFrame(shift_image(scene.rgb.rgb, -sx * factor, -sy * factor))


# -- proxy and alignment ---------------------------------------------------------------

def test_proxy_of_matching_gray_is_identity():
    thermal = np.random.default_rng(0).uniform(0, 255, size=(12, 12)).round()
    proxy = domain_proxy(gray_rgb(thermal), thermal)
    width = (thermal.max() - thermal.min()) / HIST_BINS
    assert np.max(np.abs(proxy - thermal)) <= width


def test_proxy_constant_thermal():
    rgb = RgbFrame(np.random.default_rng(1).integers(0, 256, size=(8, 8, 3), dtype=np.uint8))
    with pytest.warns(DegenerateProxyWarning):
        proxy = domain_proxy(rgb, np.full((8, 8), 21.0))
    assert np.all(proxy == 21.0)


def test_proxy_correlates_on_synthetic_scene(scene):
    s, lo = scene
    proxy = domain_proxy(aligned_rgb(s), lo)
    assert proxy.shape == lo.shape
    assert ncc_map(proxy, lo)[0, 0] >= 0.8


def test_align_recovers_scene_shift(scene):
    s, lo = scene
    pair = align_guide(s.rgb, lo)
    assert pair.offset == (-s.rgb_shift[0], -s.rgb_shift[1])
    assert pair.score >= 0.75
    assert not pair.degenerate


def test_align_already_aligned(scene):
    s, lo = scene
    assert align_guide(aligned_rgb(s), lo).offset == (0, 0)


def test_align_constructed_shift(scene):
    s, lo = scene
    shifted = RgbFrame(shift_image(aligned_rgb(s).rgb, 3 * 4, -2 * 4))
    pair = align_guide(shifted, lo)
    assert pair.offset == (-3, 2)
    # undoing the shift reproduces the aligned guide away from replicated borders
    np.testing.assert_array_equal(pair.guide_rgb.rgb[40:-40, 40:-40], aligned_rgb(s).rgb[40:-40, 40:-40])


def test_align_exhaustive_oracle(scene):
    s, lo = scene
    shifted = RgbFrame(shift_image(aligned_rgb(s).rgb, -2 * 4, 1 * 4))
    proxy = domain_proxy(shifted, lo)
    r = 4
    core = lo[r:-r, r:-r]
    best = None
    for dy in range(-r, r + 1):
        for dx in range(-r, r + 1):
            window = proxy[r - dy:r - dy + core.shape[0], r - dx:r - dx + core.shape[1]]
            score = float(np.corrcoef(window.ravel(), core.ravel())[0, 1])
            if best is None or score > best[0]:
                best = (score, dx, dy)
    pair = align_guide(shifted, lo, search_radius=r)
    assert pair.offset == (best[1], best[2]) == (2, -1)
    assert pair.score == pytest.approx(best[0], abs=1e-10)


def test_align_noise_guide_rejected(scene):
    s, lo = scene
    noise = RgbFrame(np.random.default_rng(2).integers(0, 256, size=s.rgb.rgb.shape, dtype=np.uint8))
    with pytest.raises(UnalignedPairError) as info:
        align_guide(noise, lo)
    assert info.value.best_score < 0.75


def test_align_constant_guide_is_degenerate(scene):
    s, lo = scene
    flat = RgbFrame(np.full(s.rgb.rgb.shape, 120, dtype=np.uint8))
    pair = align_guide(flat, lo)
    assert pair.degenerate and pair.offset == (0, 0)


def test_align_requires_integer_factor():
    with pytest.raises(ValueError):
        align_guide(RgbFrame(np.zeros((30, 30, 3), dtype=np.uint8)), np.ones((8, 8)))


def test_shift_image_definition():
    img = np.arange(20).reshape(4, 5)
    out = shift_image(img, 2, -1)
    assert out[1, 3] == img[2, 1]
    assert out[0, 0] == img[1, 0]


# -- guided upsampling -----------------------------------------------------------------

def test_config_defaults_and_invariants():
    cfg = GuidedSrConfig()
    assert (cfg.factor, cfg.radius) == (4, 4)
    assert cfg.epsilon == pytest.approx(1e-3 * 255 ** 2)
    for kw in (dict(factor=0), dict(radius=0), dict(epsilon=0.0)):
        with pytest.raises(ValueError):
            GuidedSrConfig(**kw)


def test_constant_guide_equals_bilinear():
    lo = np.random.default_rng(3).uniform(20, 30, size=(10, 12))
    flat = RgbFrame(np.full((40, 48, 3), 90, dtype=np.uint8))
    pair = AlignedPair(lo, flat, lo, (0, 0), 0.0, degenerate=True)
    np.testing.assert_allclose(guided_upsample(lo, pair), upsample_bilinear(lo, 4), atol=1e-6)


def test_identity_regime():
    lo = np.random.default_rng(4).uniform(0, 255, size=(16, 16)).round()
    pair = AlignedPair(lo, gray_rgb(lo), lo, (0, 0), 1.0)
    out = guided_upsample(lo, pair, GuidedSrConfig(factor=1, radius=2, epsilon=1e12))
    np.testing.assert_allclose(out, lo, atol=1e-6)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2 ** 32 - 1), st.floats(-20, 120))
def test_constant_thermal_stays_constant(seed, value):
    rgb = RgbFrame(np.random.default_rng(seed).integers(0, 256, size=(24, 32, 3), dtype=np.uint8))
    lo = np.full((6, 8), value)
    out = guided_upsample(lo, AlignedPair(lo, rgb, lo, (0, 0), 1.0))
    np.testing.assert_allclose(out, value, atol=1e-6)


@pytest.mark.parametrize("index", [1, 2, 3])
def test_guided_sharper_and_unbiased(index):
    s = make_scene(0, index)
    lo = convert_frame(s.thermal_lo, SynthConfig().params).celsius
    pair = align_guide(s.rgb, lo)
    guided = guided_upsample(lo, pair)
    bilinear = upsample_bilinear(lo, 4)
    assert edge_width(edge_profile(guided, s.edge)) <= edge_width(edge_profile(bilinear, s.edge))
    assert abs(guided.mean() - bilinear.mean()) <= 0.5
    truth = s.truth_hi.celsius
    assert np.sqrt(np.mean((guided - truth) ** 2)) <= np.sqrt(np.mean((bilinear - truth) ** 2))


# -- loss terms ----------------------------------------------------------------------------

def test_pixel_losses_trivial():
    a = np.random.default_rng(5).normal(size=(6, 7))
    for fn in (cycle_consistency_loss, identity_loss, mse_loss, content_loss):
        assert fn(a, a) == 0.0
    assert cycle_consistency_loss(a, a + 2) == pytest.approx(2.0, abs=1e-12)
    assert identity_loss(a, a + 2) == pytest.approx(4.0, abs=1e-12)
    assert mse_loss(a, a + 3) == pytest.approx(9.0, abs=1e-12)
    assert content_loss(a, a + 1) == pytest.approx(1.0, abs=1e-12)


def test_pixel_losses_loop_oracle():
    rng = np.random.default_rng(6)
    a, b = rng.normal(size=(5, 6)), rng.normal(size=(5, 6))
    abs_sum = sq_sum = 0.0
    for x, y in zip(a.ravel(), b.ravel()):
        abs_sum += abs(x - y)
        sq_sum += (x - y) ** 2
    assert cycle_consistency_loss(a, b) == pytest.approx(abs_sum / 30, abs=1e-12)
    for fn in (identity_loss, mse_loss, content_loss):
        assert fn(a, b) == pytest.approx(sq_sum / 30, abs=1e-12)


def test_edge_features_oracle():
    img = np.random.default_rng(7).normal(size=(6, 5))
    feats = edge_features(img)
    assert feats.shape == (4, 4, 3)
    for k in range(4):
        for y in range(4):
            for x in range(3):
                assert feats[k, y, x] == pytest.approx(np.sum(img[y:y + 3, x:x + 3] * EDGE_KERNELS[k]), abs=1e-12)


def test_image_content_loss_pluggable():
    rng = np.random.default_rng(8)
    a, b = rng.normal(size=(8, 8)), rng.normal(size=(8, 8))
    assert image_content_loss(a, b) == pytest.approx(content_loss(edge_features(a), edge_features(b)), abs=1e-12)
    assert image_content_loss(a, b, phi=lambda im: im) == pytest.approx(mse_loss(a, b), abs=1e-12)


def test_adversarial_loss():
    assert adversarial_loss(1.0) == 0.0
    assert adversarial_loss(0.5) == pytest.approx(math.log(2), abs=1e-15)
    assert adversarial_loss(math.exp(-2)) == pytest.approx(2.0, abs=1e-15)
    for bad in (0.0, -0.1, 1.5):
        with pytest.raises(ValueError):
            adversarial_loss(bad)


def test_total_loss():
    assert total_loss(0, 0, 0, 0, 0, LossWeights(0.3)) == 0.0
    assert total_loss(1, 1, 1, 1, 1, LossWeights(0.1)) == pytest.approx(4.1, abs=1e-15)
    assert total_loss(1, 2, 3, 4, 100, LossWeights(0.0)) == 10.0
    with pytest.raises(ValueError):
        total_loss(1, math.nan, 0, 0, 0, LossWeights(1.0))
    with pytest.raises(ValueError):
        LossWeights(math.inf)


def test_shape_mismatch():
    with pytest.raises(ValueError):
        mse_loss(np.zeros((2, 2)), np.zeros((2, 3)))


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2 ** 32 - 1))
def test_loss_symmetry_and_sign(seed):
    rng = np.random.default_rng(seed)
    a, b = rng.normal(size=(5, 5)), rng.normal(size=(5, 5))
    for fn in (cycle_consistency_loss, identity_loss, mse_loss, content_loss):
        assert fn(a, b) == fn(b, a) >= 0


@settings(max_examples=60, deadline=None)
@given(st.floats(1e-6, 1.0), st.floats(1e-6, 1.0))
def test_adversarial_strictly_decreasing(p, q):
    if p < q:
        assert adversarial_loss(p) > adversarial_loss(q)
