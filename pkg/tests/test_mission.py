import json

import numpy as np
import pytest

from cubeqkd import channel as ch
from cubeqkd import mission as ms
from cubeqkd.geometry import PassCatalog

R0S = [0.05, 0.1, 0.2, 0.3, 0.4]


@pytest.fixture(scope="module")
def small_catalog(co_catalog):
    return PassCatalog(co_catalog.passes[:40])


def _write(tmp_path, text):
    p = tmp_path / "w.csv"
    p.write_text(text)
    return p


def test_histogram_ingestion(tmp_path):
    w = ms.ingest_fried_histogram(_write(tmp_path, "r0_low_cm,r0_high_cm,nights\n10,12,4\n12,14,6\n"))
    assert w.usable_nights == 10
    assert w.bins[0] == (0.10, 0.12, 4)
    assert w.mean_r0 == pytest.approx((4 * 0.11 + 6 * 0.13) / 10)


def test_single_bin_mean_is_midpoint(tmp_path):
    w = ms.ingest_fried_histogram(_write(tmp_path, "r0_low_cm,r0_high_cm,nights\n20,30,50\n"))
    assert w.mean_r0 == pytest.approx(0.25)


@pytest.mark.parametrize("body, msg", [
    ("r0_low_cm,r0_high_cm,nights\n", "no data"),
    ("r0_low_cm,r0_high_cm,nights\n10,12,0\n", "zero nights"),
    ("r0_low_cm,r0_high_cm,nights\n10,12,-1\n", ":2: negative"),
    ("r0_low_cm,r0_high_cm,nights\n10,12,3\n10,x,1\n", ":3: malformed"),
    ("r0_low_cm,r0_high_cm,nights\n10,12\n", ":2: expected 3"),
    ("low,high,n\n10,12,1\n", ":1: expected header"),
    ("", "empty"),
])
def test_histogram_errors(tmp_path, body, msg):
    with pytest.raises(ValueError, match=msg):
        ms.ingest_fried_histogram(_write(tmp_path, body))


def test_bundled_weather():
    w = ms.bundled_weather()
    assert w.usable_nights <= 365
    assert min(lo for lo, _, _ in w.bins) >= ms.USABLE_R0
    assert 0.15 < w.mean_r0 < 0.25


def test_weather_sample():
    w = ms.bundled_weather()
    x = w.sample(np.random.default_rng(1), 20000)
    lost = np.mean(x == 0)
    assert lost == pytest.approx(1 - w.usable_nights / 365, abs=0.015)
    assert np.mean(x[x > 0]) == pytest.approx(w.mean_r0, abs=0.003)


@pytest.mark.parametrize("proto", ch.PROTOCOLS)
def test_pass_yield_monotone_in_r0(overhead, cfg, proto):
    bits = [ms.pass_key_yield(overhead, r0, proto, cfg).key_bits[proto] for r0 in R0S]
    assert all(np.diff(bits) > 0)


def test_dsp_beats_e91(overhead, cfg):
    for r0 in R0S[1:]:
        y = ms.pass_key_yield(overhead, r0, cfg=cfg)
        assert y.key_bits_dsp >= y.key_bits_e91


def test_window_respects_connection_time(overhead, cfg):
    for t_qc in (60.0, 120.0):
        y = ms.pass_key_yield(overhead, 0.2, cfg=cfg, t_qc=t_qc)
        for a, b in y.windows.values():
            assert 0 < b - a <= t_qc + 1e-9
    short = ms.pass_key_yield(overhead, 0.2, cfg=cfg, t_qc=60.0)
    long = ms.pass_key_yield(overhead, 0.2, cfg=cfg, t_qc=300.0)
    for proto in ch.PROTOCOLS:
        assert long.key_bits[proto] >= short.key_bits[proto]


def test_window_key_matches_integral_for_constant_qber(cfg):
    t = np.arange(0.0, 11.0)
    s = ms.PassSeries(t, np.full(11, 1000.0), np.full(11, 0.03), np.zeros(11))
    w = ms.best_window(s, ch.E91, cfg, t_qc=100)
    from cubeqkd.protocol import binary_entropy
    assert w.key_bits == pytest.approx(0.5 * 1000 * 10 * (1 - 2.1 * binary_entropy(0.03)))
    assert (w.start, w.stop) == (0.0, 10.0)


def test_no_key_window(overhead, cfg):
    y = ms.pass_key_yield(overhead, 0.0, cfg=cfg)
    assert y.key_bits_e91 == 0 and y.key_bits_dsp == 0
    assert y.to_dict()["protocols"]["E91"]["mean_qber"] is None


def test_window_utc(overhead, cfg):
    y = ms.pass_key_yield(overhead, 0.2, ch.E91, cfg)
    a, b = y.window_utc(ch.E91)
    assert (b - a).total_seconds() == pytest.approx(y.windows[ch.E91][1] - y.windows[ch.E91][0])
    json.dumps(y.to_dict())


def test_delta_weather_equals_sum(small_catalog, cfg):
    res = ms.annual_yield(small_catalog, ms.FriedDistribution.delta(0.2), cfg, seed=3)
    for proto in ch.PROTOCOLS:
        direct = sum(ms.pass_key_yield(p, 0.2, proto, cfg).key_bits[proto] for p in small_catalog.passes)
        assert res.bits[proto] == pytest.approx(direct, rel=1e-12)
    assert res.usable_passes == small_catalog.pass_count
    assert res.usable_seconds == pytest.approx(small_catalog.total_link_time)


def test_annual_deterministic(small_catalog, cfg):
    w = ms.bundled_weather()
    a = ms.annual_yield(small_catalog, w, cfg, seed=11)
    b = ms.annual_yield(small_catalog, w, cfg, seed=11)
    assert a == b
    assert a.usable_passes <= a.pass_count
    assert a.usable_nights <= a.nights


def test_one_draw_per_night(small_catalog, cfg):
    r0 = ms.nightly_r0(small_catalog, ms.bundled_weather(), 5, cfg.ogs_longitude)
    nights = {ms.night_index(p, cfg.ogs_longitude) for p in small_catalog.passes}
    assert set(r0) == nights


def test_night_index_noon_to_noon(overhead):
    from dataclasses import replace
    from datetime import datetime, timedelta, timezone
    base = datetime(2025, 3, 1, 23, 0, tzinfo=timezone.utc)
    a = replace(overhead, epoch=base)
    b = replace(overhead, epoch=base + timedelta(hours=6))
    c = replace(overhead, epoch=base + timedelta(hours=14))
    assert ms.night_index(a, 0.0) == ms.night_index(b, 0.0) != ms.night_index(c, 0.0)


def test_annual_json(tmp_path, small_catalog, cfg):
    res = ms.annual_yield(small_catalog, ms.bundled_weather(), cfg, seed=1)
    p = tmp_path / "a.json"
    ms.write_annual_json(p, res)
    d = json.loads(p.read_text())
    assert d["seed"] == 1 and set(d["bits"]) == set(ch.PROTOCOLS)


def test_empty_catalog(cfg):
    with pytest.raises(ValueError):
        ms.annual_yield(PassCatalog([]), ms.bundled_weather(), cfg)


def test_rate_series_csv(tmp_path, overhead, cfg):
    p = tmp_path / "s.csv"
    ms.write_rate_series_csv(p, overhead, 0.2, cfg)
    rows = p.read_text().splitlines()
    assert rows[0] == "t_s,zenith_deg,range_km,e91_qber,e91_rsec_bits_s,dsp_qber,dsp_rsec_bits_s"
    assert len(rows) == len(overhead) + 1
