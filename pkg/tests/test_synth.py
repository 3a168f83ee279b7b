import numpy as np
import pytest

from thermforge.imaging import downsample_area
from thermforge.metrics import rmse
from thermforge.radiometry import convert_frame
from thermforge.synth import (
    NETD_C,
    SynthConfig,
    edge_profile,
    make_scene,
    make_water_bath,
    scene_rng,
)


def test_scene_is_deterministic():
    a, b = make_scene(5, 3), make_scene(5, 3)
    assert a.thermal_lo == b.thermal_lo
    assert np.array_equal(a.rgb.rgb, b.rgb.rgb)
    assert np.array_equal(a.hi_celsius, b.hi_celsius)
    assert a.provenance == b.provenance


def test_streams_are_independent():
    assert make_scene(5, 3).thermal_lo != make_scene(5, 4).thermal_lo
    assert make_scene(5, 3).thermal_lo != make_scene(6, 3).thermal_lo
    assert scene_rng(1, 2).integers(1 << 62) == scene_rng(1, 2).integers(1 << 62)


def test_geometry():
    cfg = SynthConfig()
    s = make_scene(0, 0, cfg)
    assert (s.thermal_lo.width, s.thermal_lo.height) == (cfg.lo_width, cfg.lo_height)
    assert s.truth_hi.celsius.shape == (cfg.lo_height * cfg.factor, cfg.lo_width * cfg.factor)
    assert s.rgb.rgb.shape[:2] == s.truth_hi.celsius.shape
    assert s.hi_celsius.shape == (cfg.hi_height, cfg.hi_width)
    ox, oy = s.true_offset
    assert 0 <= ox <= cfg.lo_width - cfg.hi_width // cfg.factor
    assert 0 <= oy <= cfg.lo_height - cfg.hi_height // cfg.factor
    assert s.true_scale == 0.25
    assert max(abs(v) for v in s.rgb_shift) <= cfg.max_rgb_shift


@pytest.mark.parametrize("index", range(5))
def test_forward_model_oracle(index):
    cfg = SynthConfig()
    s = make_scene(2, index, cfg)
    lo = convert_frame(s.thermal_lo, cfg.params)
    assert lo.valid.all()
    reference = downsample_area(s.truth_hi.celsius, cfg.factor)
    assert rmse(lo.celsius, reference) <= 3 * NETD_C


def test_hi_frame_is_truth_crop():
    cfg = SynthConfig()
    s = make_scene(0, 7, cfg)
    ox, oy = s.true_offset
    crop = s.truth_hi.celsius[oy * 4:oy * 4 + cfg.hi_height, ox * 4:ox * 4 + cfg.hi_width]
    assert rmse(s.hi_celsius, crop) < 0.06


def test_canopy_edge_is_a_step():
    s = make_scene(0, 4)
    profile = edge_profile(s.truth_hi.celsius, s.edge, half_width=6)
    drop = s.provenance["canopy_drop_c"]
    assert profile[0] - profile[-1] == pytest.approx(drop, abs=1.5)


def test_water_bath():
    pairs = make_water_bath(1)
    assert len(pairs) == 200
    assert all(float(p.dn).is_integer() for p in pairs)
    temps = np.array([p.t_ref for p in pairs])
    assert 2.0 < temps[0] < 6.0 and 98.0 < temps[-1] < 102.0
    assert make_water_bath(1) == pairs
