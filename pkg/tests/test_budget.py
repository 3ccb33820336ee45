import math

import numpy as np
import pytest

from cubeqkd import budget as bg


def test_eta_sep_limits():
    assert bg.eta_sep(1e3, 1.0, 300.0) == pytest.approx(1.0)
    assert bg.eta_sep(1e3, 1e-6, 300.0) < 1e-10
    t = np.array([5e-3, 1e-2, 2e-2, 4e-2])
    assert np.all(np.diff(bg.eta_sep(1e3, t, 300.0)) > 0)
    # matches the direct expression where cancellation is harmless
    x = 1e3 * 2e-2
    assert bg.eta_sep(1e3, 2e-2, 300.0) == pytest.approx((1 - (1 + x) * math.exp(-x)) ** (300 / 2e-2), rel=1e-9)


def test_bits_per_tag():
    assert bg.bits_per_tag(20e-3, 10e-12) == 33
    assert bg.bits_per_tag(2**20 * 10e-12, 10e-12) == 22


def test_tag_encoding():
    t_max, bits = bg.tag_encoding(1e3, 220.0, 10e-12, 1e-3)
    assert bits == 33
    assert t_max == pytest.approx(20e-3, rel=0.05)
    assert bg.eta_sep(1e3, t_max, 220.0) >= 1 - 1e-3
    assert bg.eta_sep(1e3, t_max - 1e-6, 220.0) < 1 - 1e-3
    assert bg.eta_sep(1e3, 20e-3, 220.0) == pytest.approx(0.9995, abs=1e-4)
    with pytest.raises(ValueError):
        bg.tag_encoding(1e3, 220.0, 10e-12, 1.5)


def test_tag_encoding_monotone():
    t = [bg.tag_encoding(1e3, 220.0, 10e-12, b)[0] for b in (1e-2, 1e-3, 1e-4)]
    assert t[0] < t[1] < t[2]
    rates = [1e3, 1e4, 1e5, 1e7]
    enc = [bg.tag_encoding(r, 220.0, 10e-12, 1e-3) for r in rates]
    assert all(np.diff([e[0] for e in enc]) < 0)
    assert all(np.diff([e[1] for e in enc]) <= 0)
    assert bg.tag_encoding(1e9, 220.0, 10e-12, 1e-3)[0] == 1e-6


def test_data_volume_example():
    d = bg.pass_data_volume(515_000, 33, 250e3)
    assert d.total_bits == 16_995_000
    assert d.total_bits / 1e6 == pytest.approx(17.0, abs=0.05)
    assert d.downlink_seconds == pytest.approx(68.0, abs=0.1)
    with pytest.raises(ValueError):
        bg.pass_data_volume(10, 0)


def test_pass_counts(overhead, cfg):
    c = bg.pass_counts(overhead, 0.4, cfg)
    assert 4.5e5 < c.tags < 5.8e5
    assert c.sifted == pytest.approx(c.coincidences / 2)
    assert 0 < c.reply_fraction < 1
    lo = bg.pass_counts(overhead, 0.1, cfg)
    assert lo.tags < c.tags and lo.coincidences < c.coincidences


def test_compute_budget(cfg):
    r = bg.worst_case_pp(cfg)
    assert r.ops_per_second / 1e6 == pytest.approx(250, abs=25)
    assert r.memory_bytes / 1e6 == pytest.approx(287, abs=28.7)


def test_pp_resources_zero():
    r = bg.pp_resources(0, 0, 1.0)
    assert (r.ops_total, r.memory_bytes) == (0, 0)
    with pytest.raises(ValueError):
        bg.pp_resources(10, 5, 0.0)


def test_swap_totals():
    led = bg.bundled_table3()
    t = led.totals
    assert t["size_u"] == pytest.approx(3.25)
    assert t["mass_g"] == pytest.approx(3759)
    assert t["peak_mw"] == pytest.approx(31860)
    assert t["energy_mwh"] == pytest.approx(17360)
    assert led.violations == []
    assert led.battery_ok
    assert led.battery_required_mwh == pytest.approx(17360 / 0.3)


def test_swap_violation_and_battery(tmp_path):
    p = tmp_path / "s.csv"
    p.write_text("name,size_u,mass_g,peak_mw,energy_mwh,category\n"
                 "brick,4,5000,1000,19000,structure\nbattery,0.5,300,0,60000,supply\n")
    led = bg.swap_ledger(p)
    assert set(led.violations) == {"size_u", "mass_g"}
    assert led.totals["energy_mwh"] == 19000
    assert not led.battery_ok
    assert "INSUFFICIENT" in led.report()


@pytest.mark.parametrize("body, msg", [
    ("name,size\nx,1\n", ":1: expected header"),
    ("name,size_u,mass_g,peak_mw,energy_mwh,category\nx,1,2,3\n", ":2: expected 6"),
    ("name,size_u,mass_g,peak_mw,energy_mwh,category\nx,1,2,3,4,optics\ny,a,2,3,4,optics\n", ":3: malformed"),
])
def test_swap_errors(tmp_path, body, msg):
    p = tmp_path / "s.csv"
    p.write_text(body)
    with pytest.raises(ValueError, match=msg):
        bg.read_swap_items(p)
