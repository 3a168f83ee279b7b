"""Scale-swept zero-mean NCC template matching and paired-crop geometry."""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass
from typing import Optional, Sequence, Tuple

import numpy as np

from .imaging import as_gray, resize_bilinear

DEFAULT_THRESHOLD = 0.75
DEFAULT_PADDING = 4
TIE_TOLERANCE = 1e-12  # scores this close are ties, resolved by scale, then y, then x


class DegenerateTemplateError(ValueError):
    pass


class NoMatchError(ValueError):
    pass


class UnacceptedMatchError(ValueError):
    pass


@dataclass(frozen=True)
class MatchResult:
    x_star: int
    y_star: int
    scale: float
    score: float
    accepted: bool
    template_width: int
    template_height: int

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "MatchResult":
        return cls(**d)


@dataclass(frozen=True)
class Rect:
    x: int
    y: int
    width: int
    height: int

    def slice(self):
        return np.s_[self.y:self.y + self.height, self.x:self.x + self.width]

    def within(self, width: int, height: int) -> bool:
        return (0 <= self.x and 0 <= self.y and self.width >= 0 and self.height >= 0
                and self.x + self.width <= width and self.y + self.height <= height)


@dataclass(frozen=True)
class CropSpec:
    rect_lo: Rect
    rect_hi: Rect
    rect_rgb: Optional[Rect]
    padding: int

    def to_dict(self) -> dict:
        return {
            "rect_lo": asdict(self.rect_lo),
            "rect_hi": asdict(self.rect_hi),
            "rect_rgb": asdict(self.rect_rgb) if self.rect_rgb is not None else None,
            "padding": self.padding,
        }


def default_scales(nominal: float, spread: float = 0.10, steps: int = 9):
    """``steps`` scales evenly covering ``nominal`` +/- ``spread``."""
    return list(np.linspace(nominal * (1 - spread), nominal * (1 + spread), steps))


def scaled_size(width: int, height: int, scale: float) -> Tuple[int, int]:
    return max(1, int(round(width * scale))), max(1, int(round(height * scale)))


def _window_sums(img: np.ndarray, h: int, w: int) -> np.ndarray:
    c = np.zeros((img.shape[0] + 1, img.shape[1] + 1))
    c[1:, 1:] = img.cumsum(0).cumsum(1)
    return c[h:, w:] - c[:-h, w:] - c[h:, :-w] + c[:-h, :-w]


def _cross_correlate(search: np.ndarray, tmpl: np.ndarray) -> np.ndarray:
    H, W = search.shape
    h, w = tmpl.shape
    oh, ow = H - h + 1, W - w + 1
    out = np.zeros((oh, ow))
    if h * w <= oh * ow:
        for dy in range(h):
            for dx in range(w):
                out += tmpl[dy, dx] * search[dy:dy + oh, dx:dx + ow]
    else:
        flat = tmpl.ravel()
        for y in range(oh):
            for x in range(ow):
                out[y, x] = search[y:y + h, x:x + w].ravel() @ flat
    return out


def ncc_map(search, template) -> np.ndarray:
    """Zero-mean normalised cross-correlation at every valid offset.

    Result has shape ``(H - h + 1, W - w + 1)``; entry ``[y, x]`` scores the
    template against ``search[y:y+h, x:x+w]``. Windows with no variance
    score 0.
    """
    search = as_gray(search)
    tmpl = as_gray(template)
    H, W = search.shape
    h, w = tmpl.shape
    if h > H or w > W:
        raise ValueError(f"template {w}x{h} larger than search image {W}x{H}")
    t = tmpl - tmpl.mean()
    t_ss = float(np.sum(t * t))
    t_scale = float(np.max(np.abs(tmpl))) or 1.0
    if t_ss <= 1e-24 * t.size * t_scale * t_scale:
        raise DegenerateTemplateError("template has zero variance")

    # centring the search image keeps the running sums well conditioned
    s = search - search.mean()
    n = h * w
    s_sum = _window_sums(s, h, w)
    s_sq = _window_sums(s * s, h, w)
    s_ss = np.maximum(s_sq - s_sum * s_sum / n, 0.0)
    num = _cross_correlate(s, t)

    s_scale = float(np.max(np.abs(s))) or 1.0
    flat = s_ss <= 1e-20 * n * s_scale * s_scale
    with np.errstate(divide="ignore", invalid="ignore"):
        score = num / np.sqrt(s_ss * t_ss)
    score[flat] = 0.0
    return np.clip(score, -1.0, 1.0)


def _match_at_scale(search, template, scale):
    tw, th = scaled_size(template.shape[1], template.shape[0], scale)
    if th > search.shape[0] or tw > search.shape[1]:
        return None
    resized = template if (tw, th) == (template.shape[1], template.shape[0]) \
        else resize_bilinear(template, th, tw)
    scores = ncc_map(search, resized)
    # first offset in row-major order within the tie tolerance of the maximum
    idx = int(np.argmax(scores >= scores.max() - TIE_TOLERANCE))
    y, x = divmod(idx, scores.shape[1])
    return float(scores[y, x]), y, x, tw, th


def best_match(
    search,
    template,
    scales: Sequence[float],
    threshold: float = DEFAULT_THRESHOLD,
    threads: int = 1,
) -> MatchResult:
    """Global NCC maximum over scales and offsets.

    Ties go to the smallest scale, then the smallest ``y``, then ``x``.
    """
    search = as_gray(search)
    template = as_gray(template)
    scales = sorted(float(s) for s in scales)
    if not scales:
        raise ValueError("scale list is empty")
    if any(not s > 0 for s in scales):
        raise ValueError("scales must be positive")

    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            found = list(pool.map(lambda s: _match_at_scale(search, template, s), scales))
    else:
        found = [_match_at_scale(search, template, s) for s in scales]

    best = None
    for scale, hit in zip(scales, found):
        if hit is not None and (best is None or hit[0] > best[1][0] + TIE_TOLERANCE):
            best = (scale, hit)
    if best is None:
        raise NoMatchError("no scale fits the template inside the search image")
    scale, (score, y, x, tw, th) = best
    return MatchResult(
        x_star=x, y_star=y, scale=scale, score=score,
        accepted=score >= threshold, template_width=tw, template_height=th,
    )


def _clamp_rect(x0, y0, x1, y1, width, height) -> Rect:
    x0, y0 = max(0, x0), max(0, y0)
    x1, y1 = min(width, x1), min(height, y1)
    return Rect(x0, y0, max(0, x1 - x0), max(0, y1 - y0))


def derive_crops(
    match: MatchResult,
    lo_dims: Tuple[int, int],
    hi_dims: Tuple[int, int],
    rgb_dims: Optional[Tuple[int, int]] = None,
    padding: int = DEFAULT_PADDING,
) -> CropSpec:
    """Crop rectangles for the matched footprint in each image's native resolution.

    Dimensions are ``(width, height)``. The padded footprint is clamped to
    the low-res frame; the same padded footprint, mapped back through the
    template scale, is clamped to the high-res frame. The RGB rectangle is
    the low-res rectangle scaled by the RGB-to-thermal resolution ratio.
    """
    if not match.accepted:
        raise UnacceptedMatchError(f"match score {match.score:.4f} was not accepted")
    if padding < 0:
        raise ValueError("padding must be non-negative")
    lo_w, lo_h = lo_dims
    hi_w, hi_h = hi_dims
    tw, th = scaled_size(hi_w, hi_h, match.scale)

    x0, y0 = match.x_star - padding, match.y_star - padding
    x1, y1 = match.x_star + tw + padding, match.y_star + th + padding
    rect_lo = _clamp_rect(x0, y0, x1, y1, lo_w, lo_h)

    s = match.scale
    rect_hi = _clamp_rect(
        math.floor((x0 - match.x_star) / s), math.floor((y0 - match.y_star) / s),
        math.ceil((x1 - match.x_star) / s), math.ceil((y1 - match.y_star) / s),
        hi_w, hi_h,
    )

    rect_rgb = None
    if rgb_dims is not None:
        rgb_w, rgb_h = rgb_dims
        fx, fy = rgb_w / lo_w, rgb_h / lo_h
        rect_rgb = _clamp_rect(
            math.floor(rect_lo.x * fx), math.floor(rect_lo.y * fy),
            math.ceil((rect_lo.x + rect_lo.width) * fx), math.ceil((rect_lo.y + rect_lo.height) * fy),
            rgb_w, rgb_h,
        )
    return CropSpec(rect_lo, rect_hi, rect_rgb, padding)
