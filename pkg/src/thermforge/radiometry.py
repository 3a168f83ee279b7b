"""Digital number <-> temperature conversion for radiometric thermal sensors.

The sensor model is the logarithmic form used by FLIR radiometric cameras::

    T[degC] = B / ln(R1 / (R2 * (DN + O)) + F) - 273.15

and its closed-form inverse.
"""
from __future__ import annotations

import json
import math
import warnings
from dataclasses import asdict, dataclass

import numpy as np

from .imaging import ThermalFrame

KELVIN_OFFSET = 273.15


class RadiometryDomainError(ValueError):
    """A value lies outside the domain of the sensor model.

    ``constraint`` names the failed condition.
    """

    def __init__(self, constraint: str, message: str):
        super().__init__(message)
        self.constraint = constraint


@dataclass(frozen=True)
class RadiometricParams:
    r1: float
    r2: float
    b: float
    f: float
    o: float

    def __post_init__(self):
        for name in ("r1", "r2", "b", "f", "o"):
            value = float(getattr(self, name))
            if not math.isfinite(value):
                raise ValueError(f"{name} must be finite")
            object.__setattr__(self, name, value)
        for name in ("r1", "r2", "b"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive, got {getattr(self, name)}")

    def replace(self, **changes) -> "RadiometricParams":
        return RadiometricParams(**{**asdict(self), **changes})

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "RadiometricParams":
        try:
            return cls(r1=d["r1"], r2=d["r2"], b=d["b"], f=d["f"], o=d["o"])
        except KeyError as exc:
            raise ValueError(f"radiometric params missing key {exc.args[0]!r}") from None


# FLIR One Pro constants: factory EXIF values and a water-bath recalibration.
FACTORY_PARAMS = RadiometricParams(r1=18333.4, r2=0.0125, b=1435.0, f=1.0, o=-2284.0)
OPTIMIZED_PARAMS = RadiometricParams(r1=12755.4, r2=0.0125, b=1435.0, f=1.0, o=-6707.0)


@dataclass(frozen=True)
class MeasuringRange:
    min_c: float = -20.0
    max_c: float = 120.0

    def __post_init__(self):
        if not (math.isfinite(self.min_c) and math.isfinite(self.max_c)):
            raise ValueError("measuring range bounds must be finite")
        if not self.min_c < self.max_c:
            raise ValueError(f"min_c ({self.min_c}) must be below max_c ({self.max_c})")

    @property
    def span(self) -> float:
        return self.max_c - self.min_c

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "MeasuringRange":
        return cls(min_c=float(d["min_c"]), max_c=float(d["max_c"]))


FLIR_ONE_PRO_RANGE = MeasuringRange(-20.0, 120.0)


@dataclass(frozen=True, eq=False)
class TemperatureMap:
    """Per-pixel temperatures; ``celsius`` is NaN wherever ``valid`` is False."""

    celsius: np.ndarray
    valid: np.ndarray
    all_invalid: bool = False

    def __post_init__(self):
        c = np.asarray(self.celsius, dtype=np.float64)
        v = np.asarray(self.valid, dtype=bool)
        if c.ndim != 2 or c.shape != v.shape:
            raise ValueError("celsius and valid must be 2-D grids of equal shape")
        if not np.all(np.isfinite(c[v])):
            raise ValueError("valid pixels must hold finite temperatures")
        object.__setattr__(self, "celsius", c)
        object.__setattr__(self, "valid", v)
        object.__setattr__(self, "all_invalid", not v.any())

    @classmethod
    def from_celsius(cls, celsius) -> "TemperatureMap":
        c = np.asarray(celsius, dtype=np.float64)
        return cls(c, np.isfinite(c))

    @property
    def width(self) -> int:
        return self.celsius.shape[1]

    @property
    def height(self) -> int:
        return self.celsius.shape[0]


def temperature_of_dn(dn: float, params: RadiometricParams) -> float:
    dn = float(dn)
    shifted = dn + params.o
    if not shifted > 0:
        raise RadiometryDomainError(
            "dn+o>0", f"dn + o = {shifted} must be positive (dn={dn}, o={params.o})"
        )
    arg = params.r1 / (params.r2 * shifted) + params.f
    if not arg > 1:
        raise RadiometryDomainError(
            "log_arg>1", f"r1/(r2*(dn+o)) + f = {arg} must exceed 1 for dn={dn}"
        )
    return params.b / math.log(arg) - KELVIN_OFFSET


def dn_of_temperature(t: float, params: RadiometricParams) -> float:
    kelvin = float(t) + KELVIN_OFFSET
    if not kelvin > 0:
        raise RadiometryDomainError("t>-273.15", f"temperature {t} degC is below absolute zero")
    denom = math.exp(params.b / kelvin) - params.f
    if not denom > 0:
        raise RadiometryDomainError(
            "exp(b/T)-f>0", f"exp(b/T) - f = {denom} must be positive at {t} degC"
        )
    return params.r1 / (params.r2 * denom) - params.o


def temperatures(dn, params: RadiometricParams):
    """Vectorised conversion; returns ``(celsius, in_domain)`` with NaN off-domain."""
    dn = np.asarray(dn, dtype=np.float64)
    shifted = dn + params.o
    ok = shifted > 0
    with np.errstate(divide="ignore", invalid="ignore"):
        arg = params.r1 / (params.r2 * np.where(ok, shifted, 1.0)) + params.f
        ok &= arg > 1
        celsius = params.b / np.log(np.where(ok, arg, np.e)) - KELVIN_OFFSET
    ok &= np.isfinite(celsius)
    return np.where(ok, celsius, np.nan), ok


def dns(celsius, params: RadiometricParams) -> np.ndarray:
    """Vectorised inverse; NaN where the temperature is outside the model domain."""
    kelvin = np.asarray(celsius, dtype=np.float64) + KELVIN_OFFSET
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        denom = np.exp(params.b / kelvin) - params.f
        out = params.r1 / (params.r2 * denom) - params.o
    return np.where((kelvin > 0) & (denom > 0), out, np.nan)


def convert_frame(
    frame: ThermalFrame,
    params: RadiometricParams,
    range: MeasuringRange = FLIR_ONE_PRO_RANGE,
) -> TemperatureMap:
    """Convert every pixel, masking off-domain and out-of-range values."""
    celsius, ok = temperatures(frame.dn, params)
    ok &= (celsius >= range.min_c) & (celsius <= range.max_c)
    tmap = TemperatureMap(np.where(ok, celsius, np.nan), ok)
    if tmap.all_invalid:
        warnings.warn(f"no convertible pixels in frame {frame.capture_id!r}", RuntimeWarning, stacklevel=2)
    return tmap


def load_params(path) -> RadiometricParams:
    with open(path) as fh:
        return RadiometricParams.from_dict(json.load(fh))


def save_params(params: RadiometricParams, path) -> None:
    with open(path, "w") as fh:
        json.dump(params.to_dict(), fh, indent=2)
        fh.write("\n")
