"""Chunk-level peak identification against the detected pair rate."""
import argparse

import numpy as np

from cubeqkd import tagsim
from cubeqkd.config import MissionConfig


def identified(cfg, pairs, chunk, n, seed0=0):
    base = tagsim.TagScenario.detected_pairs(pairs, cfg)
    offsets = np.random.default_rng(seed0).uniform(-20e-9, 20e-9, n)
    bw = cfg.coincidence_window
    hit = 0
    for k, off in enumerate(offsets):
        sc = tagsim.TagScenario(**{**base.__dict__, "true_offset": float(off)})
        a, b = tagsim.generate_streams(sc, chunk, seed0 + k, gate=60e-9)
        r = tagsim.cross_correlate(a, b, bw, search_range=50e-9)
        hit += r.found and abs(r.peak_delay - off) <= bw
    return hit / n


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--pairs", type=float, nargs="+", default=[20, 52, 80, 120, 200], help="detected pairs/s")
    ap.add_argument("--chunk", type=float, default=0.1, help="s")
    ap.add_argument("--n", type=int, default=500)
    args = ap.parse_args()

    cfg = MissionConfig()
    for p in args.pairs:
        print(f"{p:7.1f} pairs/s  {100 * identified(cfg, p, args.chunk, args.n):5.1f}% identified")


if __name__ == "__main__":
    main()
