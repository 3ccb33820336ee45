import math
from datetime import datetime, timedelta, timezone

import numpy as np
import pytest

import oracles
from cubeqkd import geometry as g


def test_slant_range_examples():
    assert g.slant_range(0.0, 500e3) == pytest.approx(500e3, abs=1e-6)
    assert g.slant_range(0.0, 400e3) == pytest.approx(400e3, abs=1e-6)
    L60 = g.slant_range(math.radians(60), 500e3)
    assert L60 == pytest.approx(oracles.slant_range_cosines(math.radians(60), 500e3), rel=1e-12)
    assert L60 == pytest.approx(909e3, rel=2e-3)


def test_slant_range_monotone_and_domain():
    z = np.radians(np.arange(0, 90, 1.0))
    L = g.slant_range(z, 500e3)
    assert np.all(np.diff(L) > 0)
    with pytest.raises(ValueError):
        g.slant_range(math.pi / 2, 500e3)


def test_orbital_period():
    assert g.orbital_period(500e3) == pytest.approx(oracles.period(500e3), rel=1e-12)
    assert g.orbital_period(500e3) == pytest.approx(5668, abs=5)


def test_orbit_spec_validation():
    with pytest.raises(ValueError):
        g.OrbitSpec(300e3, 0.5)
    with pytest.raises(ValueError):
        g.OrbitSpec(500e3, 4.0)
    with pytest.raises(ValueError):
        g.OrbitSpec(500e3, 0.5, epoch=datetime(2020, 6, 1))


def test_equatorial_orbit_stays_on_equator():
    o = g.OrbitSpec(500e3, 0.0)
    pos = g.propagate(o, o.epoch, o.epoch + timedelta(hours=6), 60)
    lat = np.arcsin(pos.ecef[:, 2] / np.linalg.norm(pos.ecef, axis=1))
    assert np.max(np.abs(lat)) < 1e-12


def test_propagation_constant_radius_and_continuity():
    o = g.circular_orbit(51.6)
    step = 30.0
    pos = g.propagate(o, o.epoch, o.epoch + timedelta(days=1), step)
    r = np.linalg.norm(pos.ecef, axis=1)
    assert np.ptp(r) / r.mean() < 1e-6
    v = math.sqrt(g.MU_EARTH / o.radius)
    gaps = np.linalg.norm(np.diff(pos.eci, axis=0), axis=1)
    assert gaps.max() <= v * step * 1.000001


def test_propagation_deterministic():
    o = g.circular_orbit(30)
    a = g.propagate(o, o.epoch, o.epoch + timedelta(hours=3), 10)
    b = g.propagate(o, o.epoch, o.epoch + timedelta(hours=3), 10)
    assert np.array_equal(a.ecef, b.ecef)


def test_sso_inclination_near_97_deg():
    assert math.degrees(g.sso_inclination(500e3)) == pytest.approx(97.4, abs=0.2)


def test_zenith_pass_shape(overhead):
    assert overhead.zenith.min() == pytest.approx(0.0, abs=1e-12)
    assert np.all(overhead.zenith <= math.radians(60) + 1e-12)
    assert overhead.duration == pytest.approx(206, abs=2)
    assert overhead.range.min() == pytest.approx(500e3, rel=1e-9)


def test_equatorial_orbit_has_no_passes():
    cat = g.year_catalog(g.circular_orbit(0.0), days=30)
    assert cat.pass_count == 0
    assert cat.total_link_time == 0.0


def test_empty_series_gives_empty_catalog():
    o = g.circular_orbit(30)
    pos = g.PositionSeries(o, np.empty(0), np.empty((0, 3)), np.empty((0, 3)))
    assert g.find_passes(pos, g.LA_PALMA).pass_count == 0


def test_catalog_invariants(co_catalog):
    cat = co_catalog
    assert cat.total_link_time == pytest.approx(sum(p.duration for p in cat.passes))
    assert cat.mean_pass_duration == pytest.approx(cat.total_link_time / cat.pass_count)
    for p in cat.passes[:50]:
        assert np.all(np.diff(p.t) > 0)
        assert np.all(math.pi / 2 - p.zenith >= math.radians(30) - 1e-9)
        assert np.all(p.ogs_night)
        assert np.all(np.diff(p.t) == pytest.approx(1.0))


def test_night_flag_false_in_daylight():
    o = g.circular_orbit(30)
    t = np.arange(0, 2 * 86400, 600.0)
    la = g.look_angles(o, t, g.LA_PALMA)
    sun = g.sun_direction_eci(o.epoch, t)
    up = g.eci_to_ecef(sun, g.gmst(o.epoch, t)) @ g.LA_PALMA.up
    sun_el = np.arcsin(up)
    assert not np.any(la.ogs_night & (sun_el >= math.radians(-12)))
    assert np.any(la.ogs_night) and np.any(~la.ogs_night)


def test_noon_sun_high_in_june():
    # local noon at La Palma on the epoch day: sun near 83 deg elevation
    o = g.circular_orbit(30)
    noon = datetime(2020, 6, 1, 13, 11, tzinfo=timezone.utc)
    t = (noon - o.epoch).total_seconds()
    sun = g.sun_direction_eci(o.epoch, np.array([t]))
    up = g.eci_to_ecef(sun, g.gmst(o.epoch, np.array([t]))) @ g.LA_PALMA.up
    assert math.degrees(math.asin(up[0])) == pytest.approx(83.4, abs=0.5)


def test_catalog_csv(tmp_path, co_catalog):
    cat = g.PassCatalog(co_catalog.passes[:3])
    cat.to_csv(tmp_path / "p.csv")
    cat.samples_to_csv(tmp_path / "s.csv")
    rows = (tmp_path / "p.csv").read_text().splitlines()
    assert rows[0] == "start,end,max_elevation_deg,duration_s" and len(rows) == 4


def test_link_time_vs_inclination_deterministic():
    a = g.link_time_vs_inclination([math.radians(30)], days=20)
    b = g.link_time_vs_inclination([math.radians(30)], days=20)
    assert a == b
    with pytest.raises(ValueError):
        g.link_time_vs_inclination([])
