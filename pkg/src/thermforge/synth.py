"""Seeded synthetic field scenes with known ground truth.

A scene is a bare-soil background with cooler elliptical leaves and one
straight canopy row. From the high-resolution temperature truth we
derive a low-res raw DN frame through the sensor forward model, an
edge-consistent RGB guide, and a high-res reference thermal frame that
covers a known sub-window of the low-res field of view.

Randomness for scene ``i`` comes from a Philox stream keyed on
``(seed, i)``, so any scene can be regenerated in isolation.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Tuple

import numpy as np
from scipy.ndimage import gaussian_filter

from .imaging import RgbFrame, ThermalFrame, downsample_area
from .radiometry import OPTIMIZED_PARAMS, RadiometricParams, TemperatureMap, dns

NETD_C = 0.070  # FLIR One Pro thermal sensitivity
HI_NETD_C = 0.040  # FLIR Boson

SOIL_RGB = (178, 152, 118)
LEAF_RGB = (52, 98, 46)


def scene_rng(seed: int, index: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed), int(index)])))


@dataclass(frozen=True)
class SynthConfig:
    lo_width: int = 160
    lo_height: int = 120
    factor: int = 4
    hi_width: int = 512
    hi_height: int = 384
    margin: int = 16  # low-res pixels of canvas around the field of view
    max_rgb_shift: int = 3
    blur_sigma: float = 1.0  # optics, in high-res pixels
    params: RadiometricParams = OPTIMIZED_PARAMS


@dataclass(frozen=True, eq=False)
class SyntheticScene:
    truth_hi: TemperatureMap  # low-res field of view at factor x resolution
    thermal_lo: ThermalFrame
    rgb: RgbFrame  # same field of view as truth_hi, misaligned by rgb_shift
    hi_celsius: np.ndarray  # high-res camera frame, template for pairing
    true_offset: Tuple[int, int]  # hi frame position inside thermal_lo
    true_scale: float
    rgb_shift: Tuple[int, int]  # rgb content displacement in low-res pixels
    edge: Tuple[float, float, float]  # canopy boundary (x, y, normal angle) in truth_hi
    provenance: dict = field(default_factory=dict)


def _smooth_field(rng, h, w, amplitude):
    yy, xx = np.mgrid[0:h, 0:w]
    out = np.zeros((h, w))
    for _ in range(3):
        fx, fy = rng.uniform(0.3, 1.5, size=2) * 2 * np.pi
        phase = rng.uniform(0, 2 * np.pi)
        out += np.sin(fx * xx / w + fy * yy / h + phase)
    return amplitude * out / 3.0


def _ellipse_mask(h, w, cx, cy, a, b, theta):
    yy, xx = np.mgrid[0:h, 0:w]
    x, y = xx - cx, yy - cy
    c, s = np.cos(theta), np.sin(theta)
    u = (x * c + y * s) / a
    v = (-x * s + y * c) / b
    return u * u + v * v <= 1.0


def _signed_distance(h, w, px, py, angle):
    yy, xx = np.mgrid[0:h, 0:w]
    return (xx - px) * np.cos(angle) + (yy - py) * np.sin(angle)


def edge_profile(img, edge, half_width: int = 24) -> np.ndarray:
    """Mean of ``img`` per 1-pixel signed-distance bin across a straight edge.

    ``edge`` is ``(x, y, angle)``: a point on the boundary and the direction
    of its normal. Bins run from ``-half_width`` to ``half_width``.
    """
    px, py, angle = edge
    img = np.asarray(img, dtype=np.float64)
    d = np.round(_signed_distance(*img.shape, px, py, angle)).astype(np.intp)
    sel = np.abs(d) <= half_width
    idx = d[sel] + half_width
    sums = np.bincount(idx, weights=img[sel], minlength=2 * half_width + 1)
    counts = np.bincount(idx, minlength=2 * half_width + 1)
    return sums / np.maximum(counts, 1)


def _depth(drop_c):
    # cooler (more transpiring) foliage renders as deeper green
    return 0.55 + 0.45 * (drop_c - 2.0) / 6.0


def _layout(rng, cfg: SynthConfig):
    f = cfg.factor
    H = (cfg.lo_height + 2 * cfg.margin) * f
    W = (cfg.lo_width + 2 * cfg.margin) * f
    m = cfg.margin * f
    fov_w = cfg.lo_width * f

    background = rng.uniform(22.0, 32.0)
    temp = background + _smooth_field(rng, H, W, 0.8)
    # per-pixel blend from soil colour (0) to full leaf colour (1)
    cover = np.zeros((H, W))
    tint = np.zeros((H, W, 3))

    # a straight canopy row of random orientation through the central field
    # of view; its near boundary passes through (ex, ey) with normal `angle`
    angle = float(rng.uniform(0.0, 2.0 * np.pi))
    ex = float(rng.uniform(0.3, 0.7) * fov_w)
    ey = float(rng.uniform(0.3, 0.7) * cfg.lo_height * f)
    row_width = rng.uniform(8, 20) * f
    dist = _signed_distance(H, W, m + ex, m + ey, angle)
    canopy = (dist > 0) & (dist <= row_width)
    drop = rng.uniform(2.0, 8.0)
    temp[canopy] -= drop
    cover[canopy] = _depth(drop)

    # leaves stay clear of the row so edge profiles are clean
    guard = 12 * f
    clear = (dist < -guard) | (dist > row_width + guard)
    leaves = []
    for _ in range(int(rng.integers(14, 26))):
        a, b = rng.uniform(12, 40), rng.uniform(8, 24)
        cx, cy = rng.uniform(0, W), rng.uniform(0, H)
        theta = rng.uniform(0, np.pi)
        mask = _ellipse_mask(H, W, cx, cy, a, b, theta) & clear
        d = rng.uniform(2.0, 8.0)
        temp[mask] -= d
        tint[mask] = rng.normal(0, 3, size=3)
        cover[mask] = _depth(d)
        leaves.append({"cx": cx - m, "cy": cy - m, "a": a, "b": b, "theta": theta, "drop_c": d})

    soil, green = np.array(SOIL_RGB, float), np.array(LEAF_RGB, float)
    rgb = soil + cover[..., None] * (green - soil) + tint
    rgb = rgb + rng.normal(0, 3.0, size=rgb.shape)
    rgb = np.clip(np.round(rgb), 0, 255).astype(np.uint8)
    info = {"background_c": background, "canopy_drop_c": drop, "row_width": row_width, "leaves": leaves}
    return temp, rgb, (ex, ey, angle), info


def forward_model(truth_canvas, rng, cfg: SynthConfig) -> np.ndarray:
    """Truth (degC) -> DN with sensor noise, optical blur, binning and quantisation."""
    dn = dns(truth_canvas, cfg.params)
    gain = dns(truth_canvas + NETD_C, cfg.params) - dn  # DN per NETD step
    dn = dn + rng.normal(0.0, 1.0, size=dn.shape) * gain
    dn = gaussian_filter(dn, cfg.blur_sigma, mode="nearest")
    dn = downsample_area(dn, cfg.factor)
    return np.clip(np.round(dn), 0, 65535).astype(np.uint16)


def make_scene(seed: int, index: int, cfg: SynthConfig = SynthConfig()) -> SyntheticScene:
    rng = scene_rng(seed, index)
    f, m = cfg.factor, cfg.margin
    temp, rgb_canvas, edge, info = _layout(rng, cfg)

    fov = np.s_[m * f:(m + cfg.lo_height) * f, m * f:(m + cfg.lo_width) * f]
    truth = temp[fov]
    lo_dn = forward_model(truth, rng, cfg)

    sx, sy = (int(v) for v in rng.integers(-cfg.max_rgb_shift, cfg.max_rgb_shift + 1, size=2))
    y0, x0 = (m - sy) * f, (m - sx) * f
    rgb = rgb_canvas[y0:y0 + cfg.lo_height * f, x0:x0 + cfg.lo_width * f]

    tw, th = cfg.hi_width // f, cfg.hi_height // f
    ox = int(rng.integers(0, cfg.lo_width - tw + 1))
    oy = int(rng.integers(0, cfg.lo_height - th + 1))
    hi = truth[oy * f:oy * f + cfg.hi_height, ox * f:ox * f + cfg.hi_width]
    hi = hi + rng.normal(0.0, HI_NETD_C, size=hi.shape)

    info.update({
        "seed": int(seed), "index": int(index),
        "true_offset": [ox, oy], "true_scale": 1.0 / f,
        "rgb_shift": [sx, sy], "edge": list(edge),
    })
    return SyntheticScene(
        truth_hi=TemperatureMap.from_celsius(truth),
        thermal_lo=ThermalFrame(lo_dn, capture_id=f"scene{index:04d}"),
        rgb=RgbFrame(rgb, capture_id=f"scene{index:04d}"),
        hi_celsius=hi,
        true_offset=(ox, oy),
        true_scale=1.0 / f,
        rgb_shift=(sx, sy),
        edge=edge,
        provenance=info,
    )


def make_water_bath(seed: int, n: int = 200, t_start: float = 4.0, t_end: float = 100.0,
                    noise_c: float = 0.5, params: RadiometricParams = OPTIMIZED_PARAMS):
    """Heating sweep of reference pairs: integer DN readouts against noisy thermocouple temperatures."""
    from .optimize import ReferencePair

    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed), 0xCA11])))
    t_true = np.linspace(t_start, t_end, n)
    dn = np.round(dns(t_true, params))
    t_ref = t_true + rng.normal(0.0, noise_c, size=n)
    return [ReferencePair(dn=float(d), t_ref=float(t), timestamp=float(i)) for i, (d, t) in enumerate(zip(dn, t_ref))]
