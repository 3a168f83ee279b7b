"""RGB-guided thermal upsampling and the generator loss terms.

The alignment stage brings the RGB guide into the thermal intensity domain
(grayscale + histogram matching), finds the translation that maximises NCC
against the low-res thermal frame, and shifts the guide accordingly. Fusion
is a guided filter driven by the aligned guide.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Callable, Optional, Tuple

import numpy as np
from scipy.ndimage import uniform_filter
from numpy.lib.stride_tricks import sliding_window_view

from .imaging import (
    RgbFrame,
    as_gray,
    downsample_area,
    histogram_match,
    resize_bilinear,
    rgb_to_gray,
    upsample_bilinear,
)
from .matching import DEFAULT_THRESHOLD, ncc_map

DEFAULT_SEARCH_RADIUS = 10


class UnalignedPairError(ValueError):
    def __init__(self, best_score: float, threshold: float):
        super().__init__(f"best alignment NCC {best_score:.4f} below threshold {threshold}")
        self.best_score = best_score
        self.threshold = threshold


class DegenerateProxyWarning(UserWarning):
    pass


@dataclass(frozen=True)
class GuidedSrConfig:
    factor: int = 4
    radius: Optional[int] = None
    epsilon: Optional[float] = None

    def __post_init__(self):
        if int(self.factor) != self.factor or self.factor < 1:
            raise ValueError("factor must be an integer >= 1")
        if self.radius is None:
            object.__setattr__(self, "radius", int(self.factor))
        if self.epsilon is None:
            object.__setattr__(self, "epsilon", 1e-3 * 255.0 ** 2)
        if int(self.radius) != self.radius or self.radius < 1:
            raise ValueError("radius must be an integer >= 1")
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")

    def to_dict(self) -> dict:
        return {"factor": int(self.factor), "radius": int(self.radius), "epsilon": float(self.epsilon)}


@dataclass(frozen=True)
class LossWeights:
    alpha: float

    def __post_init__(self):
        if not math.isfinite(self.alpha):
            raise ValueError("alpha must be finite")


@dataclass(frozen=True, eq=False)
class AlignedPair:
    thermal_lo: np.ndarray
    guide_rgb: RgbFrame
    proxy: np.ndarray
    offset: Tuple[int, int]
    score: float
    degenerate: bool = False

    @property
    def guide_factor(self) -> int:
        return self.guide_rgb.width // self.thermal_lo.shape[1]


def _to_shape(img: np.ndarray, shape) -> np.ndarray:
    h, w = shape
    if img.shape == (h, w):
        return img
    fy, fx = img.shape[0] / h, img.shape[1] / w
    if fy == fx and fy == int(fy) and fy >= 1:
        return downsample_area(img, int(fy))
    return resize_bilinear(img, h, w)


def domain_proxy(guide: RgbFrame, thermal) -> np.ndarray:
    """Thermal-looking rendition of ``guide`` at the thermal resolution."""
    thermal = as_gray(thermal)
    gray = rgb_to_gray(guide)
    if thermal.min() == thermal.max():
        warnings.warn("thermal reference is constant; proxy is constant", DegenerateProxyWarning, stacklevel=2)
    matched = histogram_match(gray, thermal)
    return _to_shape(matched, thermal.shape)


def shift_image(img: np.ndarray, dx: int, dy: int) -> np.ndarray:
    """``out[y, x] = img[y - dy, x - dx]`` with edge replication."""
    h, w = img.shape[:2]
    ys = np.clip(np.arange(h) - dy, 0, h - 1)
    xs = np.clip(np.arange(w) - dx, 0, w - 1)
    return img[ys][:, xs]


def alignment_scores(proxy, thermal, search_radius: int) -> np.ndarray:
    """NCC for every guide shift; entry ``[r + dy, r + dx]`` scores shift ``(dx, dy)``.

    The thermal frame minus an ``r``-pixel border is the template, so every
    shift compares the same thermal pixels.
    """
    r = int(search_radius)
    h, w = thermal.shape
    if 2 * r >= h or 2 * r >= w:
        raise ValueError(f"search radius {r} too large for a {w}x{h} frame")
    core = thermal[r:h - r, r:w - r]
    # map[v, u] pairs thermal(x, y) with proxy(x + u - r, y + v - r); flip to shift order
    return ncc_map(proxy, core)[::-1, ::-1]


def align_guide(
    guide: RgbFrame,
    thermal,
    search_radius: int = DEFAULT_SEARCH_RADIUS,
    threshold: float = DEFAULT_THRESHOLD,
) -> AlignedPair:
    """Translate ``guide`` so its thermal proxy best matches ``thermal``.

    The guide must be an integer multiple of the thermal resolution. A
    constant proxy carries no alignment information; it is returned
    unshifted and flagged ``degenerate``.
    """
    thermal = as_gray(thermal)
    if search_radius < 0:
        raise ValueError("search radius must be non-negative")
    h, w = thermal.shape
    fy, fx = guide.height / h, guide.width / w
    if fy != fx or fy != int(fy) or fy < 1:
        raise ValueError(
            f"guide {guide.width}x{guide.height} is not an integer multiple of thermal {w}x{h}"
        )
    factor = int(fx)

    with warnings.catch_warnings():
        warnings.simplefilter("ignore", DegenerateProxyWarning)
        proxy = domain_proxy(guide, thermal)
    if proxy.min() == proxy.max() or thermal.min() == thermal.max():
        return AlignedPair(thermal, guide, proxy, (0, 0), 0.0, degenerate=True)

    scores = alignment_scores(proxy, thermal, search_radius)
    idx = int(np.argmax(scores))
    v, u = divmod(idx, scores.shape[1])
    best = float(scores[v, u])
    if best < threshold:
        raise UnalignedPairError(best, threshold)
    dx, dy = u - search_radius, v - search_radius

    shifted = shift_image(guide.rgb, dx * factor, dy * factor)
    return AlignedPair(
        thermal_lo=thermal,
        guide_rgb=RgbFrame(shifted, capture_id=guide.capture_id),
        proxy=shift_image(proxy, dx, dy),
        offset=(dx, dy),
        score=best,
    )


def _box(img: np.ndarray, radius: int) -> np.ndarray:
    return uniform_filter(img, size=2 * radius + 1, mode="reflect")


def guided_filter(guide, src, radius: int, epsilon: float) -> np.ndarray:
    """Classic local-linear guided filter: ``mean(a) * guide + mean(b)``."""
    i_mean = _box(guide, radius)
    p_mean = _box(src, radius)
    cov = _box(guide * src, radius) - i_mean * p_mean
    var = _box(guide * guide, radius) - i_mean * i_mean
    a = cov / (np.maximum(var, 0.0) + epsilon)
    b = p_mean - a * i_mean
    return _box(a, radius) * guide + _box(b, radius)


def guided_upsample(thermal_lo, pair: AlignedPair, config: GuidedSrConfig = GuidedSrConfig()) -> np.ndarray:
    """Bilinear upsample refined by the guided filter.

    The filter's own double box-smoothing of the base is compensated by
    adding back ``base - mean(mean(base))``, so an uninformative guide
    (``a -> 0``) returns the bilinear base unchanged.
    """
    thermal_lo = as_gray(thermal_lo)
    base = upsample_bilinear(thermal_lo, config.factor)
    guide = rgb_to_gray(pair.guide_rgb)
    if guide.shape != base.shape:
        guide = resize_bilinear(guide, *base.shape)
    r = int(config.radius)
    smooth = _box(_box(base, r), r)
    return guided_filter(guide, base, r, float(config.epsilon)) + (base - smooth)


# -- generator loss terms ------------------------------------------------------

def _same_shape(a, b):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch {a.shape} vs {b.shape}")
    return a, b


def cycle_consistency_loss(original, reconstructed) -> float:
    """Mean absolute difference between an image and its round-trip reconstruction."""
    a, b = _same_shape(original, reconstructed)
    return float(np.mean(np.abs(a - b)))


def identity_loss(target, translated) -> float:
    a, b = _same_shape(target, translated)
    return float(np.mean((a - b) ** 2))


def mse_loss(high_res, generated) -> float:
    a, b = _same_shape(high_res, generated)
    return float(np.mean((a - b) ** 2))


EDGE_KERNELS = np.array([
    [[-1, -2, -1], [0, 0, 0], [1, 2, 1]],
    [[-1, 0, 1], [-2, 0, 2], [-1, 0, 1]],
    [[0, 1, 2], [-1, 0, 1], [-2, -1, 0]],
    [[2, 1, 0], [1, 0, -1], [0, -1, -2]],
], dtype=np.float64)


def edge_features(img) -> np.ndarray:
    """Default feature extractor: responses to four 3x3 edge kernels, shape ``(4, h-2, w-2)``."""
    img = as_gray(img)
    if img.shape[0] < 3 or img.shape[1] < 3:
        raise ValueError("edge features need at least a 3x3 image")
    return np.einsum("ijkl,nkl->nij", sliding_window_view(img, (3, 3)), EDGE_KERNELS)


def content_loss(features_a, features_b) -> float:
    a, b = _same_shape(features_a, features_b)
    return float(np.mean((a - b) ** 2))


def image_content_loss(high_res, generated, phi: Callable = edge_features) -> float:
    return content_loss(phi(high_res), phi(generated))


def adversarial_loss(discriminator_output: float) -> float:
    p = float(discriminator_output)
    if not 0 < p <= 1:
        raise ValueError(f"discriminator output must lie in (0, 1], got {p}")
    return -math.log(p)


def total_loss(cycle, identity, mse, content, adversarial, weights: LossWeights) -> float:
    terms = (cycle, identity, mse, content, adversarial)
    if not all(math.isfinite(t) for t in terms):
        raise ValueError("loss terms must be finite")
    return (cycle + identity) + (mse + content + weights.alpha * adversarial)
