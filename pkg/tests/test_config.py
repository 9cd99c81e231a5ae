import json
import math

import pytest
from hypothesis import given, strategies as st

from poser.config import (ConfigError, WorldConfig, default_config, dump_config, load_config,
                          slope_lower_bound, validate_config)


def test_defaults_validate(cfg):
    assert validate_config(cfg) is cfg
    assert cfg.node_count == 350
    assert cfg.r_1 == 30.0 and cfg.r_l == 60.0


def test_packaged_defaults_match_dataclass():
    assert default_config() == WorldConfig()


def test_trust_tolerance_value(cfg):
    expected = (30.0 ** 2 * math.radians(0.25) ** 2 + 0.075 ** 2) / 2
    assert cfg.trust_tolerance == pytest.approx(expected, rel=1e-12)
    assert cfg.trust_tolerance == pytest.approx(0.01138, abs=5e-6)


def test_trust_tolerance_at_range(cfg):
    assert cfg.trust_tolerance_at(30.0) == cfg.trust_tolerance
    assert cfg.trust_tolerance_at(10.0) == cfg.trust_tolerance
    assert cfg.trust_tolerance_at(None) == cfg.trust_tolerance
    assert cfg.trust_tolerance_at(60.0) > cfg.trust_tolerance
    assert cfg.replace(trust_by_range=False).trust_tolerance_at(60.0) == cfg.trust_tolerance
    assert cfg.replace(xi=0.5).trust_tolerance_at(60.0) == 0.5


def test_slope_bound_example():
    assert slope_lower_bound(5, 5, 60, 0.035) == pytest.approx(0.47619, rel=1e-4)
    with pytest.raises(ValueError):
        slope_lower_bound(5, 5, 60, 1.0)


def test_slope_bound_violation_reported(cfg):
    bad = cfg.replace(delta=0.035)      # 6 / (5*60*0.035) = 0.571 > 0.5
    with pytest.raises(ConfigError) as exc:
        validate_config(bad)
    assert any("slope bound" in v for v in exc.value.violations)


def test_collects_every_violation(cfg):
    bad = cfg.replace(r_c=100.0, n_sel=1, p_d=1.5)
    with pytest.raises(ConfigError) as exc:
        validate_config(bad)
    msgs = " ".join(exc.value.violations)
    assert "R_c" in msgs and "n_sel" in msgs and "p_d" in msgs


def test_uneven_ranges_rejected(cfg):
    with pytest.raises(ConfigError):
        validate_config(cfg.replace(hps_ranges=(30, 36, 43, 48, 54, 60)))


def test_unknown_key_rejected():
    with pytest.raises(ConfigError):
        WorldConfig.from_dict({"nonsense": 1})


def test_file_round_trip(tmp_path, cfg):
    p = tmp_path / "c.json"
    dump_config(cfg, p)
    assert load_config(p) == cfg
    wrapped = tmp_path / "w.json"
    wrapped.write_text(json.dumps({"world": {"p_sleep": 0.75}}))
    assert load_config(wrapped).p_sleep == 0.75


@given(st.floats(1e-4, 5e-3), st.floats(100, 2000), st.floats(100, 2000))
def test_node_count_rounds_up(density, w, h):
    n = WorldConfig(density=density, width=w, height=h).node_count
    assert n >= density * w * h - 1e-6
    assert n - 1 < density * w * h + 1e-6


def test_reduced_step_slopes_valid(cfg):
    c = cfg.replace(hps_ranges=(30, 35, 40, 45, 50, 55, 60), delta_r=5.0, delta=0.035)
    assert validate_config(c) is c


def test_zero_slope_and_short_comms_rejected(cfg):
    with pytest.raises(ConfigError, match="slope bound violated"):
        validate_config(cfg.replace(db1=0.0))
    with pytest.raises(ConfigError, match="R_c < 2"):
        validate_config(cfg.replace(r_c=100.0))


def test_slope_bound_more_examples():
    assert slope_lower_bound(6, 5, 60, 0.1) == pytest.approx(0.2)
    assert slope_lower_bound(6, 5, 60, 0.999999) == pytest.approx(6 / 300, rel=1e-5)
