"""Annual key over many weather seeds, to show the spread of the sampled year."""
import argparse

import numpy as np

from cubeqkd import channel, geometry, mission
from cubeqkd.config import MissionConfig


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--orbit", choices=["co", "sso"], default="co")
    ap.add_argument("--inclination", type=float, default=30.0, help="deg")
    ap.add_argument("--seeds", type=int, default=20)
    args = ap.parse_args()

    cfg = MissionConfig()
    orbit = geometry.sun_synchronous_orbit() if args.orbit == "sso" else geometry.circular_orbit(args.inclination)
    cat = geometry.year_catalog(orbit, min_elevation=cfg.min_elevation)
    weather = mission.bundled_weather()
    print(f"{cat.pass_count} passes, {cat.total_link_time:.0f} s link time")
    runs = [mission.annual_yield(cat, weather, cfg, seed=s) for s in range(args.seeds)]
    for name, vals in [
        ("E91 Mbit", [r.bits[channel.E91] / 1e6 for r in runs]),
        ("DSP Mbit", [r.bits[channel.DSP] / 1e6 for r in runs]),
        ("usable s", [r.usable_seconds for r in runs]),
    ]:
        v = np.array(vals)
        print(f"{name:10s} mean {v.mean():10.2f}  std {v.std():8.2f}  min {v.min():10.2f}  max {v.max():10.2f}")


if __name__ == "__main__":
    main()
