"""Pipeline configuration loaded from JSON."""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import List, Optional

from .enhance import DEFAULT_SEARCH_RADIUS, GuidedSrConfig, LossWeights
from .matching import DEFAULT_PADDING, DEFAULT_THRESHOLD, default_scales
from .radiometry import FLIR_ONE_PRO_RANGE, MeasuringRange

NOMINAL_SCALE = 160 / 640  # FLIR One Pro width over FLIR Boson width


@dataclass(frozen=True)
class PipelineConfig:
    params_path: Optional[str] = None
    range: MeasuringRange = FLIR_ONE_PRO_RANGE
    ncc_threshold: float = DEFAULT_THRESHOLD
    scales: List[float] = field(default_factory=lambda: default_scales(NOMINAL_SCALE))
    padding: int = DEFAULT_PADDING
    sr: GuidedSrConfig = GuidedSrConfig()
    weights: Optional[LossWeights] = None
    seed: int = 0
    pair_window_s: float = 0.5
    search_radius: int = DEFAULT_SEARCH_RADIUS

    def __post_init__(self):
        if not 0 < self.ncc_threshold <= 1:
            raise ValueError("ncc_threshold must lie in (0, 1]")
        if not self.scales:
            raise ValueError("scales must be non-empty")
        if self.padding < 0:
            raise ValueError("padding must be non-negative")
        if not 0 <= self.seed < 2 ** 64:
            raise ValueError("seed must be an unsigned 64-bit integer")

    @classmethod
    def from_dict(cls, d: dict) -> "PipelineConfig":
        known = set(cls.__dataclass_fields__)
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        kw = dict(d)
        if "range" in kw:
            kw["range"] = MeasuringRange.from_dict(kw["range"])
        if "sr" in kw:
            kw["sr"] = GuidedSrConfig(**kw["sr"])
        if kw.get("weights") is not None:
            kw["weights"] = LossWeights(**kw["weights"])
        if "scales" in kw:
            kw["scales"] = [float(s) for s in kw["scales"]]
        return cls(**kw)

    def to_dict(self) -> dict:
        return {
            "params_path": self.params_path,
            "range": self.range.to_dict(),
            "ncc_threshold": self.ncc_threshold,
            "scales": [float(s) for s in self.scales],
            "padding": self.padding,
            "sr": self.sr.to_dict(),
            "weights": None if self.weights is None else {"alpha": self.weights.alpha},
            "seed": self.seed,
            "pair_window_s": self.pair_window_s,
            "search_radius": self.search_radius,
        }


def load_config(path) -> PipelineConfig:
    with open(path) as fh:
        return PipelineConfig.from_dict(json.load(fh))
