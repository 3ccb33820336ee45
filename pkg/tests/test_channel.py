import math

import numpy as np
import pytest

import oracles
from cubeqkd import channel as ch
from cubeqkd.config import MissionConfig, linear_to_db

R0S = [0.05, 0.1, 0.2, 0.3, 0.4]


def test_beam_waist_examples(cfg):
    assert ch.beam_waist_turbulent(0.0, 0.2, cfg) == pytest.approx(oracles.w_l(0.0, 0.2), rel=1e-12)
    assert ch.beam_waist_turbulent(0.0, 0.2, cfg) == pytest.approx(2.43, abs=0.01)
    assert ch.beam_waist_turbulent(0.0, 1e9, cfg) == pytest.approx(500e3 * 810e-9 / (0.316 * 0.3 * math.pi), rel=1e-9)
    assert ch.beam_waist_turbulent(0.0, 1e9, cfg) == pytest.approx(1.36, abs=0.01)
    assert ch.beam_waist_turbulent(math.radians(60), 0.2, cfg) > ch.beam_waist_turbulent(0.0, 0.2, cfg)
    with pytest.raises(ValueError):
        ch.beam_waist_turbulent(math.pi / 2, 0.2, cfg)


def test_effective_waist():
    assert ch.effective_waist(2.43, 0.0, 500e3) == 2.43
    assert ch.effective_waist(2.43, 2.4e-6, 500e3) == pytest.approx(math.hypot(2.43, 1.2), rel=1e-12)
    assert ch.effective_waist(2.43, 2.4e-6, 500e3) == pytest.approx(2.71, abs=0.01)
    w = [ch.effective_waist(2.0, s, 5e5) for s in (0, 1e-6, 2e-6, 4e-6)]
    assert w == sorted(w)


def test_atmosphere():
    assert ch.atmospheric_transmission(0.0, 0.22) == pytest.approx(math.exp(-0.22))
    assert linear_to_db(ch.atmospheric_transmission(0.0, 0.22)) == pytest.approx(-0.955, abs=1e-3)
    assert ch.atmospheric_transmission(math.radians(60), 0.22) == pytest.approx(math.exp(-0.44))
    z = np.radians(np.arange(0, 61))
    assert np.argmax(ch.atmospheric_transmission(z, 0.22)) == 0


def test_link_examples(cfg):
    assert linear_to_db(ch.link_transmission(0.0, 0.2, cfg)) == pytest.approx(-32.6, abs=0.05)
    for z in (0, 30, 45, 60):
        phi = math.radians(z)
        assert ch.link_transmission(phi, 0.2, cfg) == pytest.approx(oracles.link(phi, 0.2), rel=1e-12)
    vals = [ch.link_transmission(0.3, r, cfg) for r in R0S]
    assert all(np.diff(vals) > 0)
    big = cfg.replace(sat_aperture=1e3)
    assert ch.link_transmission(0.3, 0.2, big) == pytest.approx(ch.atmospheric_transmission(0.3, 0.22), rel=1e-9)


@pytest.mark.parametrize("r0", R0S)
def test_link_nonincreasing_in_zenith(cfg, r0):
    z = np.radians(np.arange(0, 60.5, 0.5))
    assert np.all(np.diff(ch.link_transmission(z, r0, cfg)) <= 0)


def test_pointing(cfg):
    t = ch.pointing_transmission(50e-6, 40e-6, 810e-9, 0.10)
    assert t.linear == pytest.approx(oracles.pointing(), rel=1e-12)
    assert t.linear == pytest.approx(0.536, abs=2e-3)
    assert t.db == pytest.approx(-2.71, abs=0.01)
    assert ch.pointing_transmission(1.0, 40e-6, 810e-9, 0.1).linear == pytest.approx(1.0)
    assert ch.pointing_transmission(50e-6, 1.0, 810e-9, 0.1).linear < 1e-8


def test_basis_switch():
    assert ch.basis_switch_transmission(1.0, 1e-9).linear == pytest.approx(1.0, abs=1e-9)
    t = ch.basis_switch_transmission(3e3, 100e-6)
    assert t.linear == pytest.approx(oracles.basis_switch(3e3, 100e-6), rel=1e-12)
    assert t.linear == pytest.approx(0.864, abs=1e-3)
    assert t.db == pytest.approx(-0.64, abs=0.01)
    t = ch.basis_switch_transmission(3e3, 3e-3)
    assert t.linear == pytest.approx(0.111, abs=1e-3)
    assert t.db == pytest.approx(-9.5, abs=0.05)
    # series branch, 50-digit reference value
    assert ch.basis_switch_transmission(0.999e-6, 1.0).linear == pytest.approx(0.99999950050016633, rel=1e-15)
    assert ch.basis_switch_transmission(1.001e-6, 1.0).linear == pytest.approx(1 - 1.001e-6 / 2, rel=1e-12)


def test_overrides_replace_computed_factors():
    c = MissionConfig(sat_pointing_trans=10 ** -0.25, basis_switch_trans=10 ** -0.05)
    assert ch.sat_pointing(c).db == pytest.approx(-2.5)
    assert ch.basis_switch(c).db == pytest.approx(-0.5)


def test_noise_model(cfg):
    assert ch.total_noise_rate(0.0, cfg) == pytest.approx(480.0)
    assert ch.total_noise_rate(math.radians(60), cfg) == pytest.approx(575.0)
    mid = ch.total_noise_rate(math.radians(45), cfg)
    assert 480 < mid < 575
    z = np.radians(np.linspace(0, 60, 121))
    n = ch.total_noise_rate(z, cfg)
    assert np.all(np.diff(n) >= 0)
    assert np.all((n >= 470) & (n <= 590))
    assert np.all(ch.dark_yield(z, cfg) < 1e-6)
    with pytest.raises(ValueError):
        ch.background_rate(math.radians(70), cfg)
    nm = ch.noise_model(0.0, cfg)
    assert nm.total == nm.background + 2 * nm.dark_per_detector


def test_breakdown_composition(cfg):
    for proto in ch.PROTOCOLS:
        b = ch.total_transmission(0.4, 0.2, proto, cfg)
        f = b.factors()
        assert sum(t.db for t in f.values()) == pytest.approx(b.total.db, abs=1e-9)
        assert all(0 < t.linear <= 1 for t in f.values())
        assert b.link.linear == pytest.approx(b.geometric.linear * b.atmosphere.linear)
        sat = ["link", "pointing", "sat_telescope", "sat_optics", "basis_switch", "sync", "sat_detector"]
        assert b.satellite.linear == pytest.approx(math.prod(f[k].linear for k in sat))
    d = ch.total_transmission(0.4, 0.2, ch.DSP, cfg)
    assert d.ogs_detector.linear == d.heralding_sq.linear == d.ogs_telescope.linear == 1.0
    assert d.total.linear == pytest.approx(d.satellite.linear)


def test_e91_fixed_chain(cfg):
    fixed = ch.fixed_chain(ch.E91, cfg)
    expected = (oracles.db(0.7) + oracles.db(0.85**2) - 1.0 + oracles.db(oracles.pointing()) - 1.5 - 1.0
                + oracles.db(oracles.basis_switch(3e3, 100e-6)) - 0.5 + oracles.db(0.15))
    assert sum(t.db for t in fixed.values()) == pytest.approx(expected, abs=1e-9)
    assert expected == pytest.approx(-18.3, abs=0.3)


def test_dsp_total_at_least_e91(cfg):
    for z in np.radians([0, 20, 40, 60]):
        for r0 in R0S:
            assert (ch.total_transmission(z, r0, ch.DSP, cfg).total.linear
                    >= ch.total_transmission(z, r0, ch.E91, cfg).total.linear)


def test_vectorised_bob_arm_matches_breakdown(cfg):
    z = np.radians([0, 25, 55])
    v = ch.bob_arm_transmission(z, 0.2, ch.E91, cfg)
    for k, phi in enumerate(z):
        assert v[k] == pytest.approx(ch.total_transmission(phi, 0.2, ch.E91, cfg).bob_arm.linear, rel=1e-12)


def test_loss_curve_csv(tmp_path, cfg):
    p = tmp_path / "l.csv"
    ch.write_loss_curves(p, cfg, ch.E91, [0.1, 0.2], [0, 30, 60])
    rows = p.read_text().splitlines()
    assert rows[0] == "r0_m,zenith_deg,lambda_L_db,lambda_total_db"
    assert len(rows) == 7
