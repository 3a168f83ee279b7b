import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from thermforge.metrics import (
    MetricReport,
    edge_width,
    evaluate,
    gaussian_window,
    gradient_energy,
    psnr,
    r_squared,
    rmse,
    rmse_celsius,
    ssim,
    ssim_map,
)
from thermforge.radiometry import TemperatureMap


def tm(values):
    return TemperatureMap.from_celsius(np.asarray(values, dtype=float))


# -- RMSE / R^2 ----------------------------------------------------------------------

def test_rmse_identical_zero():
    a = tm(np.random.default_rng(0).normal(size=(5, 5)))
    assert rmse_celsius(a, a) == 0.0


def test_rmse_two_residuals():
    assert rmse_celsius(tm([[3.0, 4.0]]), tm([[0.0, 0.0]])) == pytest.approx(math.sqrt(12.5), abs=1e-12)


def test_rmse_loop_oracle_with_mask():
    rng = np.random.default_rng(1)
    a = rng.normal(20, 3, size=(8, 8))
    b = rng.normal(20, 3, size=(8, 8))
    a[2, 3] = np.nan
    b[5, 1] = np.nan
    total, n = 0.0, 0
    for y in range(8):
        for x in range(8):
            if np.isfinite(a[y, x]) and np.isfinite(b[y, x]):
                total += (a[y, x] - b[y, x]) ** 2
                n += 1
    assert rmse_celsius(tm(a), tm(b)) == pytest.approx(math.sqrt(total / n), rel=1e-12)


def test_rmse_empty_joint_mask():
    with pytest.raises(ValueError):
        rmse_celsius(tm([[np.nan, 1.0]]), tm([[1.0, np.nan]]))


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2 ** 32 - 1))
def test_rmse_symmetric_and_triangle(seed):
    rng = np.random.default_rng(seed)
    a, b, c = (tm(rng.normal(size=(4, 6)) * rng.uniform(0.1, 10)) for _ in range(3))
    assert rmse_celsius(a, b) == rmse_celsius(b, a)
    assert rmse_celsius(a, c) <= rmse_celsius(a, b) + rmse_celsius(b, c) + 1e-12


def test_r_squared_cases():
    ref = np.array([1.0, 2.0, 4.0, 7.0])
    assert r_squared(ref, ref) == 1.0
    assert r_squared(np.full(4, ref.mean()), ref) == pytest.approx(0.0, abs=1e-15)
    with pytest.raises(ValueError):
        r_squared([1.0, 2.0], [3.0, 3.0])


def test_r_squared_formula_oracle():
    rng = np.random.default_rng(2)
    p, r = rng.normal(size=30), rng.normal(size=30)
    mean = sum(r) / len(r)
    ss_res = sum((ri - pi) ** 2 for pi, ri in zip(p, r))
    ss_tot = sum((ri - mean) ** 2 for ri in r)
    assert r_squared(p, r) == pytest.approx(1 - ss_res / ss_tot, abs=1e-12)


# -- PSNR --------------------------------------------------------------------------------

def test_psnr_cases():
    a = np.random.default_rng(3).uniform(size=(4, 4))
    assert psnr(a, a, 1.0) == math.inf
    assert psnr(np.zeros(100), np.full(100, 0.1), 1.0) == pytest.approx(20.0, abs=1e-9)
    with pytest.raises(ValueError):
        psnr(a, a, 0.0)


def test_psnr_formula_oracle():
    rng = np.random.default_rng(4)
    a, b = rng.normal(size=(16, 16)), rng.normal(size=(16, 16))
    mse = sum((x - y) ** 2 for x, y in zip(a.ravel(), b.ravel())) / a.size
    assert psnr(a, b, 140.0) == pytest.approx(10 * math.log10(140.0 ** 2 / mse), abs=1e-10)
    assert psnr(a, b, 140.0) == psnr(b, a, 140.0)


@settings(max_examples=100, deadline=None)
@given(st.floats(1e-3, 10), st.floats(1.01, 10))
def test_psnr_strictly_decreasing_in_mse(d, k):
    base = np.zeros(16)
    assert psnr(base, base + d * k, 1.0) < psnr(base, base + d, 1.0)


# -- SSIM ---------------------------------------------------------------------------------

def brute_ssim(a, b, dr):
    w = gaussian_window()
    c1, c2 = (0.01 * dr) ** 2, (0.03 * dr) ** 2
    vals = []
    for y in range(a.shape[0] - 10):
        for x in range(a.shape[1] - 10):
            pa, pb = a[y:y + 11, x:x + 11], b[y:y + 11, x:x + 11]
            ma, mb = np.sum(w * pa), np.sum(w * pb)
            va = np.sum(w * (pa - ma) ** 2)
            vb = np.sum(w * (pb - mb) ** 2)
            cov = np.sum(w * (pa - ma) * (pb - mb))
            vals.append((2 * ma * mb + c1) * (2 * cov + c2) / ((ma ** 2 + mb ** 2 + c1) * (va + vb + c2)))
    return float(np.mean(vals))


def test_gaussian_window():
    w = gaussian_window()
    assert w.shape == (11, 11)
    assert w.sum() == pytest.approx(1.0, abs=1e-15)
    assert w[5, 5] == w.max()


def test_ssim_identical_is_one():
    a = np.random.default_rng(5).uniform(0, 50, size=(20, 24))
    assert ssim(a, a, 140.0) == pytest.approx(1.0, abs=1e-12)
    assert ssim(a, a * 1 + 0, 140.0) == pytest.approx(1.0, abs=1e-12)


def test_ssim_offset_penalised():
    a = np.random.default_rng(6).uniform(0, 10, size=(16, 16))
    assert ssim(a, a + 300.0, 255.0) < 0.5


def test_ssim_random_oracle():
    rng = np.random.default_rng(7)
    a, b = rng.uniform(0, 255, size=(16, 16)), rng.uniform(0, 255, size=(16, 16))
    assert ssim(a, b, 255.0) == pytest.approx(brute_ssim(a, b, 255.0), abs=1e-10)
    assert ssim(a, b, 255.0) == pytest.approx(ssim(b, a, 255.0), abs=1e-12)


def test_ssim_shift_invariance():
    rng = np.random.default_rng(8)
    a, b = rng.normal(size=(30, 30)), rng.normal(size=(30, 30))
    full_a, full_b = ssim_map(a, b, 10.0), ssim_map(np.roll(a, (3, 2), (0, 1)), np.roll(b, (3, 2), (0, 1)), 10.0)
    np.testing.assert_allclose(full_b[3:, 2:], full_a[:-3, :-2], atol=1e-12)


def test_ssim_mask_skips_partial_windows():
    rng = np.random.default_rng(9)
    a, b = rng.normal(size=(16, 16)), rng.normal(size=(16, 16))
    mask = np.ones((16, 16), dtype=bool)
    mask[0, 0] = False
    smap = ssim_map(a, b, 10.0, mask)
    assert np.isnan(smap[0, 0])
    assert np.isfinite(smap[1:, :]).all() and np.isfinite(smap[:, 1:]).all()


def test_ssim_too_small():
    with pytest.raises(ValueError):
        ssim(np.zeros((10, 20)), np.zeros((10, 20)), 1.0)


# -- sharpness ----------------------------------------------------------------------------

def test_gradient_energy_constant():
    assert gradient_energy(np.full((5, 7), 3.0)) == 0.0


def test_gradient_energy_vertical_step():
    h, w, k, s = 6, 9, 4, 2.5
    img = np.zeros((h, w))
    img[:, k:] = s
    # one column of non-zero x-differences on the (h-1, w-1) grid
    assert gradient_energy(img) == pytest.approx(s * s * (h - 1) / ((h - 1) * (w - 1)), abs=1e-12)


def test_gradient_energy_loop_oracle():
    img = np.random.default_rng(10).normal(size=(7, 6))
    total = 0.0
    for y in range(6):
        for x in range(5):
            total += (img[y, x + 1] - img[y, x]) ** 2 + (img[y + 1, x] - img[y, x]) ** 2
    assert gradient_energy(img) == pytest.approx(total / 30, rel=1e-12)


def test_edge_width():
    assert edge_width([0, 0, 0, 10, 10, 10]) == pytest.approx(0.8, abs=1e-12)
    assert edge_width(np.linspace(5, -5, 11)) == pytest.approx(8.0, abs=1e-12)
    with pytest.raises(ValueError):
        edge_width([1, 1, 1])


# -- reports --------------------------------------------------------------------------------

def test_evaluate_identical():
    truth = tm(np.random.default_rng(11).uniform(20, 30, size=(16, 16)))
    rep = evaluate(truth, truth, 140.0)
    assert rep.rmse_c == 0.0
    assert rep.ssim == pytest.approx(1.0, abs=1e-12)
    assert rep.psnr_db == math.inf
    assert rep.r2 == 1.0
    assert rep.gradient_energy_ratio == pytest.approx(1.0)
    assert rep.n_pixels == 256
    d = rep.to_dict()
    assert d["psnr_db"] == "inf"
    assert MetricReport.from_dict(d) == rep


def test_evaluate_matches_parts():
    rng = np.random.default_rng(12)
    t = rng.uniform(20, 30, size=(16, 16))
    c = t + rng.normal(0, 0.5, size=t.shape)
    rep = evaluate(tm(c), tm(t), 140.0)
    assert rep.rmse_c == pytest.approx(rmse(c, t), abs=1e-12)
    assert rep.psnr_db == pytest.approx(psnr(c, t, 140.0), abs=1e-9)
    assert rep.ssim == pytest.approx(ssim(c, t, 140.0), abs=1e-12)
