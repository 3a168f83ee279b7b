"""Image containers, netpbm codecs and resampling primitives.

Grayscale images are plain 2-D ``float64`` arrays indexed ``[row, col]``.
Raw thermal frames and RGB frames carry capture metadata and so get small
frozen dataclasses.
"""
from __future__ import annotations

import os
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

LUMA_WEIGHTS = (0.299, 0.587, 0.114)
HIST_BINS = 256

_WHITESPACE = b" \t\n\r\v\f"


class PnmError(ValueError):
    """Base class for netpbm parse failures; ``offset`` is a byte position."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (byte offset {offset})")
        self.offset = offset


class PnmHeaderError(PnmError):
    pass


class UnsupportedFormatError(PnmError):
    pass


class MaxvalError(PnmError):
    pass


class TruncatedPayloadError(PnmError):
    """Payload shorter than the header promises.

    ``offset`` counts bytes from the start of the payload; ``file_offset``
    from the start of the file.
    """

    def __init__(self, offset: int, expected: int, file_offset: int):
        PnmError.__init__(
            self,
            f"payload truncated: got {offset} of {expected} bytes "
            f"(file offset {file_offset})",
            offset,
        )
        self.expected = expected
        self.file_offset = file_offset


@dataclass(frozen=True, eq=False)
class ThermalFrame:
    """Raw digital numbers from a radiometric sensor, shape ``(height, width)``."""

    dn: np.ndarray
    capture_id: str = ""
    timestamp: Optional[float] = None

    def __post_init__(self):
        dn = np.asarray(self.dn)
        if dn.ndim != 2 or dn.shape[0] < 1 or dn.shape[1] < 1:
            raise ValueError(f"thermal frame needs a non-empty 2-D grid, got shape {dn.shape}")
        if dn.dtype != np.uint16:
            if not np.all(np.isfinite(dn)) or dn.min() < 0 or dn.max() > 65535:
                raise ValueError("DN values must lie in [0, 65535]")
            if not np.array_equal(dn, np.round(dn)):
                raise ValueError("DN values must be integers")
            dn = dn.astype(np.uint16)
        dn = dn.copy()
        dn.setflags(write=False)
        object.__setattr__(self, "dn", dn)

    @property
    def width(self) -> int:
        return self.dn.shape[1]

    @property
    def height(self) -> int:
        return self.dn.shape[0]

    def __eq__(self, other):
        if not isinstance(other, ThermalFrame):
            return NotImplemented
        return (
            self.capture_id == other.capture_id
            and self.timestamp == other.timestamp
            and np.array_equal(self.dn, other.dn)
        )


@dataclass(frozen=True, eq=False)
class RgbFrame:
    """8-bit interleaved colour image, shape ``(height, width, 3)``."""

    rgb: np.ndarray
    capture_id: str = ""

    def __post_init__(self):
        rgb = np.asarray(self.rgb)
        if rgb.ndim != 3 or rgb.shape[2] != 3 or rgb.shape[0] < 1 or rgb.shape[1] < 1:
            raise ValueError(f"RGB frame needs shape (h, w, 3), got {rgb.shape}")
        if rgb.dtype != np.uint8:
            if rgb.min() < 0 or rgb.max() > 255 or not np.array_equal(rgb, np.round(rgb)):
                raise ValueError("RGB samples must be integers in [0, 255]")
            rgb = rgb.astype(np.uint8)
        rgb = rgb.copy()
        rgb.setflags(write=False)
        object.__setattr__(self, "rgb", rgb)

    @property
    def width(self) -> int:
        return self.rgb.shape[1]

    @property
    def height(self) -> int:
        return self.rgb.shape[0]

    def __eq__(self, other):
        if not isinstance(other, RgbFrame):
            return NotImplemented
        return self.capture_id == other.capture_id and np.array_equal(self.rgb, other.rgb)


def as_gray(img) -> np.ndarray:
    """Validate and widen a grayscale image to a 2-D float64 array."""
    arr = np.asarray(img, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
        raise ValueError(f"grayscale image must be a non-empty 2-D array, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError("grayscale image contains non-finite values")
    return arr


# -- netpbm codecs -----------------------------------------------------------

def _parse_header(data: bytes, magic: bytes):
    if len(data) < 2:
        raise PnmHeaderError("file too short for a netpbm magic number", 0)
    if data[:2] != magic:
        if data[:1] == b"P" and data[1:2].isdigit():
            raise UnsupportedFormatError(
                f"unsupported netpbm variant {data[:2].decode('ascii')!r}, expected {magic.decode()!r}", 0
            )
        raise PnmHeaderError(f"bad magic number, expected {magic.decode()!r}", 0)

    pos = 2
    tokens = []
    while len(tokens) < 3:
        start = pos
        # whitespace and comments between tokens
        while pos < len(data):
            c = data[pos:pos + 1]
            if c in _WHITESPACE:
                pos += 1
            elif c == b"#":
                while pos < len(data) and data[pos:pos + 1] not in (b"\n", b"\r"):
                    pos += 1
            else:
                break
        if pos == start:
            raise PnmHeaderError("expected whitespace between header tokens", pos)
        tok_start = pos
        while pos < len(data) and data[pos:pos + 1].isdigit():
            pos += 1
        if pos == tok_start:
            if pos >= len(data):
                raise PnmHeaderError("header ended early", pos)
            raise PnmHeaderError(f"non-numeric header token {data[pos:pos + 1]!r}", pos)
        tokens.append((int(data[tok_start:pos]), tok_start))

    if pos >= len(data) or data[pos:pos + 1] not in _WHITESPACE:
        raise PnmHeaderError("expected a single whitespace byte before the payload", pos)
    pos += 1

    (width, w_off), (height, h_off), (maxval, m_off) = tokens
    if width < 1:
        raise PnmHeaderError("width must be positive", w_off)
    if height < 1:
        raise PnmHeaderError("height must be positive", h_off)
    return width, height, maxval, m_off, pos


def _read_bytes(path) -> bytes:
    with open(path, "rb") as fh:
        return fh.read()


def decode_pgm16(data: bytes, capture_id: str = "") -> ThermalFrame:
    width, height, maxval, m_off, start = _parse_header(data, b"P5")
    if maxval != 65535:
        raise MaxvalError(f"maxval {maxval} unsupported, expected 65535", m_off)
    expected = 2 * width * height
    payload = data[start:start + expected]
    if len(payload) < expected:
        raise TruncatedPayloadError(len(payload), expected, start + len(payload))
    dn = np.frombuffer(payload, dtype=">u2").reshape(height, width).astype(np.uint16)
    return ThermalFrame(dn, capture_id=capture_id)


def encode_pgm16(frame: ThermalFrame) -> bytes:
    header = f"P5\n{frame.width} {frame.height}\n65535\n".encode("ascii")
    return header + frame.dn.astype(">u2").tobytes()


def load_pgm16(path) -> ThermalFrame:
    """Read a binary 16-bit PGM (``P5``, maxval 65535, big-endian samples)."""
    stem = os.path.splitext(os.path.basename(os.fspath(path)))[0]
    return decode_pgm16(_read_bytes(path), capture_id=stem)


def save_pgm16(frame: ThermalFrame, path) -> None:
    if not isinstance(frame, ThermalFrame):
        frame = ThermalFrame(frame)
    with open(path, "wb") as fh:
        fh.write(encode_pgm16(frame))


def decode_ppm(data: bytes, capture_id: str = "") -> RgbFrame:
    width, height, maxval, m_off, start = _parse_header(data, b"P6")
    if maxval != 255:
        raise MaxvalError(f"maxval {maxval} unsupported, expected 255", m_off)
    expected = 3 * width * height
    payload = data[start:start + expected]
    if len(payload) < expected:
        raise TruncatedPayloadError(len(payload), expected, start + len(payload))
    rgb = np.frombuffer(payload, dtype=np.uint8).reshape(height, width, 3)
    return RgbFrame(rgb, capture_id=capture_id)


def encode_ppm(frame: RgbFrame) -> bytes:
    header = f"P6\n{frame.width} {frame.height}\n255\n".encode("ascii")
    return header + frame.rgb.tobytes()


def load_ppm(path) -> RgbFrame:
    stem = os.path.splitext(os.path.basename(os.fspath(path)))[0]
    return decode_ppm(_read_bytes(path), capture_id=stem)


def save_ppm(frame: RgbFrame, path) -> None:
    if not isinstance(frame, RgbFrame):
        frame = RgbFrame(frame)
    with open(path, "wb") as fh:
        fh.write(encode_ppm(frame))


# -- colour and resampling ---------------------------------------------------

def rgb_to_gray(frame) -> np.ndarray:
    """ITU-R 601 luma, in [0, 255]."""
    rgb = frame.rgb if isinstance(frame, RgbFrame) else np.asarray(frame)
    rgb = rgb.astype(np.float64)
    r, g, b = LUMA_WEIGHTS
    gray = r * rgb[..., 0] + g * rgb[..., 1] + b * rgb[..., 2]
    return np.clip(gray, 0.0, 255.0)


def _axis_weights(n_in: int, n_out: int):
    # half-pixel centres, clamped borders
    src = (np.arange(n_out) + 0.5) * (n_in / n_out) - 0.5
    src = np.clip(src, 0.0, n_in - 1)
    i0 = np.floor(src).astype(np.intp)
    i1 = np.minimum(i0 + 1, n_in - 1)
    w = src - i0
    return i0, i1, w


def resize_bilinear(img, height: int, width: int) -> np.ndarray:
    """Bilinear resample to an arbitrary ``(height, width)``."""
    img = as_gray(img)
    if height < 1 or width < 1:
        raise ValueError("output size must be positive")
    y0, y1, wy = _axis_weights(img.shape[0], height)
    x0, x1, wx = _axis_weights(img.shape[1], width)
    rows = img[y0] * (1.0 - wy)[:, None] + img[y1] * wy[:, None]
    return rows[:, x0] * (1.0 - wx) + rows[:, x1] * wx


def upsample_bilinear(img, factor: int) -> np.ndarray:
    if int(factor) != factor or factor < 1:
        raise ValueError(f"upsampling factor must be an integer >= 1, got {factor}")
    img = as_gray(img)
    factor = int(factor)
    if factor == 1:
        return img.copy()
    return resize_bilinear(img, img.shape[0] * factor, img.shape[1] * factor)


def downsample_area(img, factor: int) -> np.ndarray:
    """Mean over non-overlapping ``factor x factor`` blocks."""
    if int(factor) != factor or factor < 1:
        raise ValueError(f"downsampling factor must be an integer >= 1, got {factor}")
    img = as_gray(img)
    factor = int(factor)
    h, w = img.shape
    if h % factor or w % factor:
        raise ValueError(f"image {w}x{h} is not divisible by factor {factor}")
    return img.reshape(h // factor, factor, w // factor, factor).mean(axis=(1, 3))


def _bin_index(values: np.ndarray, lo: float, width: float) -> np.ndarray:
    if width == 0.0:
        return np.zeros(values.shape, dtype=np.intp)
    idx = np.floor((values - lo) / width).astype(np.intp)
    return np.clip(idx, 0, HIST_BINS - 1)


def histogram_match(source, reference) -> np.ndarray:
    """Remap ``source`` intensities so its 256-bin CDF follows ``reference``.

    Each source bin maps to the centre of the first reference bin whose
    cumulative count fraction reaches the source bin's cumulative fraction.
    Fractions are compared in integer arithmetic so the mapping is exact.
    """
    src = as_gray(source)
    ref = as_gray(reference)

    s_lo, s_hi = float(src.min()), float(src.max())
    r_lo, r_hi = float(ref.min()), float(ref.max())
    s_width = (s_hi - s_lo) / HIST_BINS
    r_width = (r_hi - r_lo) / HIST_BINS

    s_bins = _bin_index(src.ravel(), s_lo, s_width)
    r_bins = _bin_index(ref.ravel(), r_lo, r_width)
    s_cum = np.cumsum(np.bincount(s_bins, minlength=HIST_BINS))
    r_cum = np.cumsum(np.bincount(r_bins, minlength=HIST_BINS))
    n_src, n_ref = src.size, ref.size

    # first j with r_cum[j] / n_ref >= s_cum[k] / n_src
    lut_bins = np.searchsorted(r_cum * n_src, s_cum * n_ref, side="left")
    lut = r_lo + (lut_bins + 0.5) * r_width
    return lut[s_bins].reshape(src.shape)
