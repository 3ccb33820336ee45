import json
import math

import pytest

from cubeqkd.config import (ConfigError, MissionConfig, Transmission, db_to_linear, linear_to_db,
                            load_config, parse_override)


def test_defaults_match_parameter_table(cfg):
    assert cfg.coincidence_window == 80e-12
    assert cfg.field_of_view == 50e-6
    assert cfg.sat_detector_eff == 0.15
    assert cfg.mu_dsp == 0.64
    assert cfg.ogs_aperture == 0.30
    assert cfg.pp_efficiency == 1.1
    assert cfg.max_quantum_connection == 220
    assert math.isclose(linear_to_db(cfg.sat_telescope_trans), -1.5)
    assert cfg.sat_pointing_trans is None and cfg.basis_switch_trans is None


def test_empty_or_missing_file_gives_defaults(tmp_path, cfg):
    f = tmp_path / "c.json"
    f.write_text("")
    assert load_config(f) == cfg
    assert load_config(tmp_path / "absent.json") == cfg
    f.write_text("{}")
    assert load_config(f) == cfg


def test_idempotent_override(cfg):
    assert load_config(None, {"noise_error_prob": 0.5}) == cfg
    assert load_config(None, ["noise_error_prob=0.5"]) == cfg


def test_overrides_applied_after_file(tmp_path):
    f = tmp_path / "c.json"
    f.write_text(json.dumps({"mu_dsp": 0.5}))
    assert load_config(f).mu_dsp == 0.5
    assert load_config(f, ["mu_dsp=0.7"]).mu_dsp == 0.7


def test_db_suffix_converted_on_load(tmp_path):
    c = load_config(None, {"sat_pointing_trans_db": -2.5})
    assert math.isclose(c.sat_pointing_trans, 10 ** -0.25)


def test_pp_efficiency_below_one_rejected(tmp_path):
    f = tmp_path / "c.json"
    f.write_text(json.dumps({"pp_efficiency": 0.5}))
    with pytest.raises(ConfigError, match="pp_efficiency below 1"):
        load_config(f)


def test_unknown_key_named():
    with pytest.raises(ConfigError, match="bogus_key"):
        load_config(None, {"bogus_key": 1})


@pytest.mark.parametrize("key,val,bound", [("misdetection_prob", 1.5, r"\[0, 1\]"),
                                           ("orbit_altitude", -1.0, "> 0"),
                                           ("coincidence_window", 0.0, "> 0")])
def test_out_of_range_names_field_and_bound(key, val, bound):
    with pytest.raises(ConfigError, match=key) as ei:
        MissionConfig(**{key: val})
    assert ei.match(bound)


def test_count_rate_above_max_rejected():
    with pytest.raises(ConfigError, match="sat_max_rate"):
        MissionConfig(sat_count_rate=2e5)


def test_parse_override_errors():
    with pytest.raises(ConfigError):
        parse_override("noequals")
    with pytest.raises(ConfigError):
        parse_override("mu_dsp=abc")


def test_db_examples():
    assert db_to_linear(0) == 1.0
    assert math.isclose(db_to_linear(-3.0103), 0.5, rel_tol=1e-5)
    assert math.isclose(db_to_linear(-62.7), 10 ** -6.27, rel_tol=1e-12)
    assert math.isclose(db_to_linear(-62.7), 5.37e-7, rel_tol=1e-3)
    with pytest.raises(ValueError):
        linear_to_db(0.0)
    with pytest.raises(ValueError):
        linear_to_db(-1.0)


def test_transmission_type():
    t = Transmission.from_db(-3.0)
    assert math.isclose(t.db, -3.0, rel_tol=1e-12)
    assert isinstance(t * t, Transmission)
    with pytest.raises(ValueError):
        Transmission(0.0)
    with pytest.raises(ValueError):
        Transmission(1.2)


def test_json_round_trip(cfg, tmp_path):
    f = tmp_path / "c.json"
    f.write_text(cfg.to_json())
    assert load_config(f) == cfg
    assert load_config(f).digest() == cfg.digest()
