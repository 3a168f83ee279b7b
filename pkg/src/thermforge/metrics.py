"""Full-reference quality metrics for temperature maps and grayscale images."""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Optional

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .imaging import as_gray
from .radiometry import TemperatureMap

SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_K1 = 0.01
SSIM_K2 = 0.03


@dataclass(frozen=True)
class MetricReport:
    rmse_c: float
    r2: float
    psnr_db: float
    ssim: float
    gradient_energy_ratio: float
    n_pixels: int
    psnr_peak: float

    def to_dict(self) -> dict:
        d = asdict(self)
        for k, v in d.items():
            if isinstance(v, float) and math.isinf(v):
                d[k] = "inf" if v > 0 else "-inf"
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "MetricReport":
        return cls(**{k: (int(v) if k == "n_pixels" else float(v)) for k, v in d.items()})


def rmse(predicted, reference) -> float:
    p = np.asarray(predicted, dtype=np.float64).ravel()
    r = np.asarray(reference, dtype=np.float64).ravel()
    if p.size != r.size or p.size == 0:
        raise ValueError("rmse needs equal, non-empty inputs")
    return float(np.sqrt(np.mean((p - r) ** 2)))


def rmse_celsius(a: TemperatureMap, b: TemperatureMap) -> float:
    """RMSE over pixels valid in both maps."""
    if a.celsius.shape != b.celsius.shape:
        raise ValueError(f"shape mismatch {a.celsius.shape} vs {b.celsius.shape}")
    joint = a.valid & b.valid
    if not joint.any():
        raise ValueError("no jointly valid pixels")
    return rmse(a.celsius[joint], b.celsius[joint])


def r_squared(predicted, reference) -> float:
    p = np.asarray(predicted, dtype=np.float64).ravel()
    r = np.asarray(reference, dtype=np.float64).ravel()
    if p.size != r.size or p.size == 0:
        raise ValueError("r_squared needs equal, non-empty inputs")
    ss_tot = np.sum((r - r.mean()) ** 2)
    if ss_tot == 0:
        raise ValueError("reference has zero variance; R^2 undefined")
    return float(1.0 - np.sum((r - p) ** 2) / ss_tot)


def psnr(a, b, peak: float, mask=None) -> float:
    """Peak signal-to-noise ratio in dB; ``inf`` for identical inputs."""
    if not peak > 0:
        raise ValueError("peak must be positive")
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch {a.shape} vs {b.shape}")
    if mask is not None:
        a, b = a[mask], b[mask]
    mse = float(np.mean((a - b) ** 2))
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(peak * peak / mse)


def gaussian_window(size: int = SSIM_WINDOW, sigma: float = SSIM_SIGMA) -> np.ndarray:
    r = (size - 1) / 2.0
    x = np.arange(size) - r
    g = np.exp(-(x * x) / (2.0 * sigma * sigma))
    w = np.outer(g, g)
    return w / w.sum()


def _window_mean(img: np.ndarray, w: np.ndarray) -> np.ndarray:
    return np.einsum("ijkl,kl->ij", sliding_window_view(img, w.shape), w)


def ssim_map(a, b, dynamic_range: float, mask=None) -> np.ndarray:
    """Local SSIM over every fully-inside window (NaN where a window is not fully valid)."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch {a.shape} vs {b.shape}")
    if a.ndim != 2 or a.shape[0] < SSIM_WINDOW or a.shape[1] < SSIM_WINDOW:
        raise ValueError(f"SSIM needs images of at least {SSIM_WINDOW}x{SSIM_WINDOW}")
    if mask is not None:
        mask = np.asarray(mask, dtype=bool)
        a = np.where(mask, a, 0.0)
        b = np.where(mask, b, 0.0)

    w = gaussian_window()
    c1 = (SSIM_K1 * dynamic_range) ** 2
    c2 = (SSIM_K2 * dynamic_range) ** 2
    mu_a = _window_mean(a, w)
    mu_b = _window_mean(b, w)
    var_a = _window_mean(a * a, w) - mu_a * mu_a
    var_b = _window_mean(b * b, w) - mu_b * mu_b
    cov = _window_mean(a * b, w) - mu_a * mu_b
    num = (2.0 * mu_a * mu_b + c1) * (2.0 * cov + c2)
    den = (mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2)
    out = num / den
    if mask is not None:
        full = sliding_window_view(mask, w.shape).all(axis=(2, 3))
        out = np.where(full, out, np.nan)
    return out


def ssim(a, b, dynamic_range: float, mask=None) -> float:
    smap = ssim_map(a, b, dynamic_range, mask)
    if np.isnan(smap).all():
        raise ValueError("no fully valid SSIM window")
    return float(np.nanmean(smap))


def gradient_energy(img) -> float:
    """Mean squared forward-difference gradient magnitude on the ``(h-1, w-1)`` grid."""
    img = as_gray(img)
    if img.shape[0] < 2 or img.shape[1] < 2:
        raise ValueError("gradient energy needs at least a 2x2 image")
    gx = img[:-1, 1:] - img[:-1, :-1]
    gy = img[1:, :-1] - img[:-1, :-1]
    return float(np.mean(gx * gx + gy * gy))


def edge_width(profile, lo_frac: float = 0.1, hi_frac: float = 0.9) -> float:
    """10-90 % transition width of a monotone-ish step profile, in samples.

    Levels come from the profile end points; crossings are located by
    linear interpolation at the first sample that passes each level.
    """
    p = np.asarray(profile, dtype=np.float64)
    if p.size < 2 or p[0] == p[-1]:
        raise ValueError("profile must have distinct end levels")
    # orient the step upward
    if p[-1] < p[0]:
        p = -p
    start, stop = p[0], p[-1]

    def crossing(frac):
        level = start + frac * (stop - start)
        i = int(np.argmax(p >= level))
        if i == 0:
            return 0.0
        return (i - 1) + (level - p[i - 1]) / (p[i] - p[i - 1])

    return crossing(hi_frac) - crossing(lo_frac)


def evaluate(candidate: TemperatureMap, truth: TemperatureMap, peak: float) -> MetricReport:
    """Full metric report of a candidate map against ground truth."""
    if candidate.celsius.shape != truth.celsius.shape:
        raise ValueError(f"shape mismatch {candidate.celsius.shape} vs {truth.celsius.shape}")
    joint = candidate.valid & truth.valid
    n = int(joint.sum())
    if n == 0:
        raise ValueError("no jointly valid pixels")
    c = np.where(joint, candidate.celsius, 0.0)
    t = np.where(joint, truth.celsius, 0.0)
    try:
        r2 = r_squared(c[joint], t[joint])
    except ValueError:
        r2 = math.nan
    g_truth = gradient_energy(t)
    ratio = gradient_energy(c) / g_truth if g_truth > 0 else math.nan
    return MetricReport(
        rmse_c=rmse_celsius(candidate, truth),
        r2=r2,
        psnr_db=psnr(c, t, peak, joint),
        ssim=ssim(c, t, peak, joint),
        gradient_energy_ratio=ratio,
        n_pixels=n,
        psnr_peak=float(peak),
    )
