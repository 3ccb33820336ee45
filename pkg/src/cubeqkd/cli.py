"""Command-line entry point.

Every command writes plot-ready files plus a run manifest into ``--out``.
Exit codes: 0 success, 1 internal invariant violation, 2 usage or
configuration error.
"""
from __future__ import annotations

import argparse
import json
import math
import sys
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence


from . import __version__, budget, channel, geometry, mission, protocol, tagsim
from .config import ConfigError, MissionConfig, load_config


class InvariantError(RuntimeError):
    """A computed result broke one of its documented invariants."""


class UsageError(ValueError):
    pass


def _check(cond: bool, msg: str) -> None:
    if not cond:
        raise InvariantError(msg)


@dataclass
class RunManifest:
    command: str
    argv: list[str]
    config_hash: str
    seed: int
    outputs: list[str] = field(default_factory=list)
    version: str = __version__
    wall_time_s: float = 0.0

    def write(self, out: Path) -> Path:
        path = out / f"manifest_{self.command.replace(' ', '_')}.json"
        path.write_text(json.dumps(asdict(self), indent=2, sort_keys=True) + "\n")
        return path


def _floats(text: str) -> list[float]:
    """Parse ``a,b,c`` or ``start..stop[:step]``."""
    text = text.strip()
    if not text:
        return []
    if ".." in text:
        rng, _, step = text.partition(":")
        a, _, b = rng.partition("..")
        a, b = float(a), float(b)
        st = float(step) if step else 5.0
        if st <= 0 or b < a:
            raise UsageError(f"bad range {text!r}")
        n = int(math.floor((b - a) / st + 1e-9))
        return [a + st * k for k in range(n + 1)]
    return [float(x) for x in text.split(",") if x.strip()]


def _protocols(name: str) -> tuple[str, ...]:
    name = name.upper()
    if name == "BOTH":
        return channel.PROTOCOLS
    if name not in channel.PROTOCOLS:
        raise UsageError(f"unknown protocol {name!r}")
    return (name,)


def _orbit(args) -> geometry.OrbitSpec:
    if args.orbit == "sso":
        return geometry.sun_synchronous_orbit(args.altitude * 1e3)
    return geometry.circular_orbit(args.inclination, args.altitude * 1e3)


# --- commands --------------------------------------------------------------------

def cmd_loss_curve(args, cfg, out):
    r0s = _floats(args.r0)
    if not r0s:
        raise UsageError("need at least one r0 value")
    zen = _floats(args.zenith)
    files = []
    for proto in _protocols(args.protocol):
        path = out / f"loss_curve_{proto.lower()}.csv"
        channel.write_loss_curves(path, cfg, proto, r0s, zen)
        files.append(path)
    return files


def cmd_pass(args, cfg, out):
    p = geometry.zenith_pass(cfg.orbit_altitude, cfg.min_elevation, earth_radius=cfg.earth_radius)
    protos = _protocols(args.protocol)
    y = mission.pass_key_yield(p, args.r0, protos, cfg)
    for proto in protos:
        _check(y.key_bits[proto] >= 0, "negative key")
        a, b = y.windows[proto]
        _check(b - a <= cfg.max_quantum_connection + 1e-9, "window longer than t_QC")
    series = out / "pass_series.csv"
    mission.write_rate_series_csv(series, p, args.r0, cfg, protos)
    js = out / "pass_yield.json"
    budget.write_json(js, y.to_dict())
    for proto in protos:
        print(f"{proto}: {y.key_bits[proto] / 1e3:.2f} kbit")
    return [series, js]


def cmd_annual(args, cfg, out):
    weather = mission.ingest_fried_histogram(args.weather) if args.weather else mission.bundled_weather()
    cat = geometry.year_catalog(_orbit(args), days=args.days, step=args.step, min_elevation=cfg.min_elevation)
    if cat.pass_count == 0:
        raise UsageError("orbit has no usable passes")
    res = mission.annual_yield(cat, weather, cfg, seed=args.seed)
    _check(all(v >= 0 for v in res.bits.values()), "negative annual key")
    js = out / "annual.json"
    mission.write_annual_json(js, res)
    cat_csv = out / "passes.csv"
    cat.to_csv(cat_csv)
    for proto, v in res.bits.items():
        print(f"{proto}: {v / 1e6:.2f} Mbit")
    print(f"usable link time: {res.usable_seconds:.0f} s")
    return [js, cat_csv]


def cmd_orbits(args, cfg, out):
    incs = _floats(args.inclinations)
    if not incs:
        raise UsageError("need at least one inclination")
    rows = []
    for inc in incs:
        cat = geometry.year_catalog(geometry.circular_orbit(inc, args.altitude * 1e3), days=args.days,
                                    step=args.step, min_elevation=cfg.min_elevation)
        _check(abs(cat.total_link_time - sum(p.duration for p in cat.passes)) < 1e-6, "catalog total mismatch")
        rows.append((inc, cat.total_link_time, cat.pass_count, cat.mean_pass_duration))
    path = out / "orbits.csv"
    with open(path, "w") as fh:
        fh.write("inclination_deg,link_time_s,pass_count,mean_pass_s\n")
        for inc, lt, n, m in rows:
            fh.write(f"{inc:g},{lt:.1f},{n},{m:.2f}\n")
    best = max(rows, key=lambda r: r[1])
    print(f"max link time {best[1]:.0f} s at {best[0]:g} deg")
    return [path]


def cmd_tradeoff(args, cfg, out):
    etas = _floats(args.eta)
    tbs = [x * 1e-12 for x in _floats(args.tb_ps)]
    if not etas or not tbs:
        raise UsageError("eta and t_B grids must be non-empty")
    pts = protocol.detector_tradeoff_sweep(etas, tbs, cfg, r0=args.r0, elevation=math.radians(args.elevation))
    _check(all(p.secure_rate >= 0 for p in pts), "negative secure rate")
    path = out / "tradeoff.csv"
    protocol.write_tradeoff_csv(path, pts)
    return [path]


def cmd_threshold(args, cfg, out):
    reports = []
    for proto in _protocols(args.protocol):
        reports += protocol.loss_thresholds(proto, cfg)
    path = out / "threshold.json"
    protocol.write_threshold_json(path, reports)
    for r in reports:
        print(f"{r.protocol} @ {r.noise_rate:.0f} cps: total {r.total_db:.2f} dB, link {r.link_db:.2f} dB, "
              f"E_max {100 * r.e_max:.2f}%")
    return [path]


def cmd_tagsim(args, cfg, out):
    if args.scenario:
        try:
            sc = tagsim.TagScenario(**json.loads(Path(args.scenario).read_text()))
        except (TypeError, json.JSONDecodeError) as exc:
            raise UsageError(f"bad scenario file: {exc}") from None
    else:
        sc = tagsim.TagScenario.detected_pairs(args.pairs, cfg)
    gate = args.gate * 1e-9 if args.gate > 0 else None
    a, b = tagsim.generate_streams(sc, args.duration, args.seed, gate=gate)
    tau = cfg.coincidence_window
    corr = tagsim.cross_correlate(a, b, tau, args.search_ns * 1e-9)
    offset = corr.peak_delay if corr.found else sc.true_offset
    sift = tagsim.sift_coincidences(a, b, offset, tau)
    summary = {
        "ogs_events": len(a),
        "sat_events": len(b),
        "peak_found": corr.found,
        "peak_delay_s": corr.peak_delay,
        "peak_significance": corr.peak_significance,
        "pairs": sift.n_pairs,
        "compatible": sift.compatible,
        "measured_qber": None if math.isnan(sift.measured_qber) else sift.measured_qber,
        "accidental_rate": sift.accidental_rate,
        "sync_loss_db": tagsim.sync_loss_estimate(cfg.ogs_jitter, cfg.sat_jitter, args.sync_jitter_ps * 1e-12, tau).db,
    }
    if args.duration >= 2 * cfg.sync_chunk:
        sync = tagsim.chunked_sync(a, b, cfg.sync_chunk, sc.drift, tau, args.search_ns * 1e-9, sc.true_offset)
        summary.update(lock_fraction=sync.lock_fraction, locked=sync.locked, drift_fit=sync.drift_fit)
    ext = "csv" if args.format == "csv" else "bin"
    writer = tagsim.write_csv if ext == "csv" else tagsim.write_binary
    pa, pb = out / f"tags_ogs.{ext}", out / f"tags_sat.{ext}"
    writer(pa, a)
    writer(pb, b)
    js = out / "tagsim.json"
    budget.write_json(js, summary)
    return [pa, pb, js]


def cmd_budget(args, cfg, out):
    files = []
    if args.what == "swap":
        led = budget.swap_ledger(args.items) if args.items else budget.bundled_table3()
        t = led.totals
        _check(t["mass_g"] >= 0 and t["energy_mwh"] >= 0, "negative ledger total")
        js = out / "swap.json"
        budget.write_json(js, led.to_dict())
        txt = out / "swap.txt"
        txt.write_text(led.report() + "\n")
        print(led.report())
        files += [js, txt]
    elif args.what == "data":
        t_max, bits = budget.tag_encoding(args.rate_min, cfg.max_quantum_connection, cfg.tag_resolution,
                                          args.overflow)
        counts = budget.pass_counts(geometry.zenith_pass(cfg.orbit_altitude, cfg.min_elevation), args.r0, cfg)
        db = budget.pass_data_volume(round(counts.tags), bits, args.downlink * 1e3, counts.reply_fraction, t_max)
        _check(db.total_bits == db.tags * db.bits_per_tag, "data budget arithmetic")
        js = out / "data_budget.json"
        budget.write_json(js, {**db.to_dict(), "sifted": counts.sifted, "reply_fraction": counts.reply_fraction})
        print(f"{bits} bits/tag, {db.total_bits / 1e6:.1f} Mbit, {db.downlink_seconds:.0f} s downlink, "
              f"reply {db.reply_bits / 1e6:.2f} Mbit")
        files.append(js)
    else:
        res = budget.worst_case_pp(cfg)
        js = out / "compute_budget.json"
        budget.write_json(js, res.to_dict())
        print(f"{res.ops_per_second / 1e6:.0f} Mops/s, {res.memory_bytes / 1e6:.0f} MB")
        files.append(js)
    return files


# --- parser ----------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="flat JSON configuration file")
    common.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="override a config key")
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--out", type=Path, default=Path("."), help="output directory")

    p = argparse.ArgumentParser(prog="cubeqkd", description="CubeSat quantum uplink feasibility toolkit")
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("loss-curve", parents=[common], help="link and total transmission vs zenith angle")
    s.add_argument("--r0", default="0.05,0.1,0.2,0.3,0.4", help="Fried parameters in m")
    s.add_argument("--zenith", default="0..60:1", help="zenith angles in deg")
    s.add_argument("--protocol", default="both")
    s.set_defaults(func=cmd_loss_curve)

    s = sub.add_parser("pass", parents=[common], help="key yield of the overhead reference pass")
    s.add_argument("--r0", type=float, default=0.2)
    s.add_argument("--protocol", default="both")
    s.set_defaults(func=cmd_pass)

    def orbit_args(q):
        q.add_argument("--orbit", choices=["co", "sso"], default="co")
        q.add_argument("--inclination", type=float, default=30.0, help="deg, circular orbits")
        q.add_argument("--altitude", type=float, default=500.0, help="km")
        q.add_argument("--days", type=float, default=365.0)
        q.add_argument("--step", type=float, default=30.0, help="coarse scan step, s")

    s = sub.add_parser("annual", parents=[common], help="one-year key under sampled weather")
    orbit_args(s)
    s.add_argument("--weather", type=Path, help="Fried histogram CSV (default: bundled)")
    s.set_defaults(func=cmd_annual)

    s = sub.add_parser("orbits", parents=[common], help="annual link time vs inclination")
    s.add_argument("--inclinations", default="0..90:5", help="deg, list or start..stop[:step]")
    s.add_argument("--altitude", type=float, default=500.0, help="km")
    s.add_argument("--days", type=float, default=365.0)
    s.add_argument("--step", type=float, default=30.0)
    s.set_defaults(func=cmd_orbits)

    s = sub.add_parser("tradeoff", parents=[common], help="detector efficiency vs timing jitter sweep")
    s.add_argument("--eta", default="0.05..0.6:0.05")
    s.add_argument("--tb-ps", default="10..200:10")
    s.add_argument("--r0", type=float, default=0.2)
    s.add_argument("--elevation", type=float, default=60.0, help="deg")
    s.set_defaults(func=cmd_tradeoff)

    s = sub.add_parser("threshold", parents=[common], help="maximum tolerable loss at both noise levels")
    s.add_argument("--protocol", default="both")
    s.set_defaults(func=cmd_threshold)

    s = sub.add_parser("tagsim", parents=[common], help="Monte Carlo time tags and synchronisation")
    s.add_argument("--scenario", type=Path, help="JSON with TagScenario fields")
    s.add_argument("--pairs", type=float, default=52.0, help="detected pairs/s when no scenario is given")
    s.add_argument("--duration", type=float, default=1.0, help="s")
    s.add_argument("--gate", type=float, default=60.0, help="ns; 0 generates every OGS event")
    s.add_argument("--search-ns", type=float, default=50.0)
    s.add_argument("--sync-jitter-ps", type=float, default=20.0)
    s.add_argument("--format", choices=["bin", "csv"], default="bin")
    s.set_defaults(func=cmd_tagsim)

    s = sub.add_parser("budget", parents=[common], help="SWaP, data and compute budgets")
    s.add_argument("what", choices=["swap", "data", "compute"])
    s.add_argument("--items", type=Path, help="SWaP CSV (default: bundled table)")
    s.add_argument("--rate-min", type=float, default=1e3, help="minimum satellite count rate, cps")
    s.add_argument("--overflow", type=float, default=1e-3)
    s.add_argument("--r0", type=float, default=0.4)
    s.add_argument("--downlink", type=float, default=250.0, help="kbps")
    s.set_defaults(func=cmd_budget)
    return p


def main(argv: Sequence[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    t0 = time.perf_counter()
    try:
        cfg: MissionConfig = load_config(args.config, args.set)
        out = args.out
        out.mkdir(parents=True, exist_ok=True)
        files = args.func(args, cfg, out)
    except InvariantError as exc:
        print(f"error: invariant violated: {exc}", file=sys.stderr)
        return 1
    except (ConfigError, UsageError, ValueError, FileNotFoundError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    man = RunManifest(args.command, argv, cfg.digest(), args.seed, [str(f) for f in files])
    man.wall_time_s = round(time.perf_counter() - t0, 3)
    man.write(out)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
