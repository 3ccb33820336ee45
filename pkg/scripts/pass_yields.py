"""Per-pass key of the overhead reference pass over a range of seeing conditions."""
import argparse

from cubeqkd import channel, geometry, mission
from cubeqkd.config import load_config


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--r0", type=float, nargs="+", default=[0.05, 0.10, 0.20, 0.30, 0.40], help="m")
    ap.add_argument("--t-qc", type=float, default=None, help="connection limit, s")
    ap.add_argument("--set", action="append", default=[], metavar="KEY=VALUE")
    args = ap.parse_args()

    cfg = load_config(None, args.set)
    p = geometry.zenith_pass(cfg.orbit_altitude, cfg.min_elevation, earth_radius=cfg.earth_radius)
    print(f"{'r0 (cm)':>8} {'E91 kbit':>10} {'window s':>9} {'DSP kbit':>10} {'window s':>9}")
    for r0 in args.r0:
        y = mission.pass_key_yield(p, r0, cfg=cfg, t_qc=args.t_qc)
        row = [f"{100 * r0:8.1f}"]
        for proto in channel.PROTOCOLS:
            a, b = y.windows[proto]
            row += [f"{y.key_bits[proto] / 1e3:10.2f}", f"{b - a:9.0f}"]
        print(" ".join(row))


if __name__ == "__main__":
    main()
