"""Temperature maps persisted as affine-encoded 16-bit PGM plus a JSON sidecar.

``code = round((celsius - min_c) / slope)`` with ``slope = span / 65535``
over the measuring range. Invalid pixels are stored as code 0 and listed
by flat index in the sidecar.
"""
from __future__ import annotations

import json
import os
from pathlib import Path

import numpy as np

from .imaging import ThermalFrame, load_pgm16, save_pgm16
from .radiometry import MeasuringRange, TemperatureMap

CODE_MAX = 65535


def encoding_for(range: MeasuringRange) -> dict:
    return {"slope": range.span / CODE_MAX, "intercept": range.min_c,
            "min_c": range.min_c, "max_c": range.max_c}


def encode_temperatures(tmap: TemperatureMap, range: MeasuringRange):
    """Return ``(codes, sidecar)``; pixels outside the range become invalid."""
    enc = encoding_for(range)
    c = tmap.celsius
    valid = tmap.valid & (c >= range.min_c) & (c <= range.max_c)
    codes = np.zeros(c.shape, dtype=np.uint16)
    codes[valid] = np.clip(np.round((c[valid] - enc["intercept"]) / enc["slope"]), 0, CODE_MAX)
    invalid = np.flatnonzero(~valid)
    sidecar = {
        "encoding": enc,
        "width": int(c.shape[1]),
        "height": int(c.shape[0]),
        "invalid_count": int(invalid.size),
        "invalid_indices": invalid.tolist(),
    }
    return codes, sidecar


def decode_temperatures(codes, sidecar: dict) -> TemperatureMap:
    enc = sidecar["encoding"]
    codes = np.asarray(codes)
    celsius = codes.astype(np.float64) * enc["slope"] + enc["intercept"]
    valid = np.ones(codes.shape, dtype=bool)
    valid.flat[np.asarray(sidecar.get("invalid_indices", []), dtype=np.intp)] = False
    return TemperatureMap(np.where(valid, celsius, np.nan), valid)


def sidecar_path(pgm_path) -> Path:
    return Path(pgm_path).with_suffix(".json")


def save_temperature_map(tmap: TemperatureMap, path, range: MeasuringRange, extra: dict = None,
                         sidecar: os.PathLike = None) -> dict:
    codes, meta = encode_temperatures(tmap, range)
    if extra:
        meta.update(extra)
    save_pgm16(ThermalFrame(codes), path)
    with open(sidecar or sidecar_path(path), "w") as fh:
        json.dump(meta, fh, indent=2)
        fh.write("\n")
    return meta


def load_temperature_map(path, sidecar: os.PathLike = None) -> TemperatureMap:
    frame = load_pgm16(path)
    with open(sidecar or sidecar_path(path)) as fh:
        meta = json.load(fh)
    return decode_temperatures(frame.dn, meta)


def write_json(obj, path) -> None:
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")
