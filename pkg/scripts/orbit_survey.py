"""Night link time against inclination, plus the effect of the darkness rule."""
import argparse
import math

from cubeqkd import geometry


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--step-deg", type=float, default=5.0)
    ap.add_argument("--days", type=float, default=365.0)
    args = ap.parse_args()

    incs = [k * args.step_deg for k in range(int(90 / args.step_deg) + 1)]
    sweep = geometry.link_time_vs_inclination([math.radians(i) for i in incs], days=args.days)
    for inc, lt in sweep:
        print(f"{math.degrees(inc):5.1f} deg  {lt:9.0f} s")
    best = max(sweep, key=lambda r: r[1])
    print(f"argmax {math.degrees(best[0]):.1f} deg, station latitude {math.degrees(geometry.LA_PALMA.latitude):.1f} deg")

    orbit = geometry.circular_orbit(30.0)
    for eclipse in (False, True):
        cat = geometry.year_catalog(orbit, days=args.days, require_sat_eclipse=eclipse)
        print(f"30 deg, satellite eclipse required={eclipse}: {cat.pass_count} passes, "
              f"{cat.total_link_time:.0f} s, mean {cat.mean_pass_duration:.1f} s")


if __name__ == "__main__":
    main()
