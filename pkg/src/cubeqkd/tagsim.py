"""Monte Carlo time-tag streams, cross-correlation and coincidence sifting.

Times are held as integer ticks of the tagger resolution. Jitters are
Gaussian FWHM values.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .config import MissionConfig, Transmission

FWHM_TO_SIGMA = 1 / (2 * math.sqrt(2 * math.log(2)))
OGS = "OGS"
SATELLITE = "satellite"

TAG_DTYPE = np.dtype([("t", "<u8"), ("flags", "u1")])  # packed, 9 bytes per record


@dataclass(frozen=True, eq=False)
class TagStream:
    """Detection events of one side, sorted by time.

    ``gate`` is set when only events within +-gate of the other side's
    events were generated; correlations beyond that delay are meaningless.
    """

    ticks: np.ndarray  # int64
    basis: np.ndarray  # uint8
    outcome: np.ndarray  # uint8
    resolution: float
    duration: float
    nominal_rate: float
    side: str
    gate: float | None = None

    def __post_init__(self):
        if not (len(self.ticks) == len(self.basis) == len(self.outcome)):
            raise ValueError("event arrays differ in length")
        if len(self.ticks) and np.any(np.diff(self.ticks) < 0):
            raise ValueError("tag times must be nondecreasing")

    def __len__(self):
        return len(self.ticks)

    @property
    def times(self) -> np.ndarray:
        return self.ticks * self.resolution

    def same_events(self, other: "TagStream") -> bool:
        return (np.array_equal(self.ticks, other.ticks) and np.array_equal(self.basis, other.basis)
                and np.array_equal(self.outcome, other.outcome))

    def slice(self, t0: float, t1: float) -> "TagStream":
        lo, hi = np.searchsorted(self.ticks, [round(t0 / self.resolution), round(t1 / self.resolution)])
        return TagStream(self.ticks[lo:hi], self.basis[lo:hi], self.outcome[lo:hi], self.resolution,
                         t1 - t0, self.nominal_rate, self.side, self.gate)


@dataclass(frozen=True)
class TagScenario:
    pair_rate: float
    trans_a: float
    trans_b: float
    noise_a: float = 0.0
    noise_b: float = 0.0
    jitter_a: float = 0.0
    jitter_b: float = 0.0
    sync_jitter: float = 0.0
    true_offset: float = 0.0
    drift: float = 0.0
    misdetection: float = 0.0
    resolution: float = 10e-12

    def __post_init__(self):
        for name in ("pair_rate", "noise_a", "noise_b", "jitter_a", "jitter_b", "sync_jitter", "misdetection"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")
        for name in ("trans_a", "trans_b"):
            if not 0 <= getattr(self, name) <= 1:
                raise ValueError(f"{name} must lie in [0, 1]")
        if not self.resolution > 0:
            raise ValueError("resolution must be positive")

    @classmethod
    def detected_pairs(cls, pairs_per_s: float, cfg: MissionConfig, noise_b: float | None = None,
                       **kw) -> "TagScenario":
        """Scenario with ``pairs_per_s`` true coincidences and the configured OGS singles rate."""
        trans_a = cfg.ogs_count_rate / cfg.e91_pair_rate
        trans_b = pairs_per_s / (cfg.e91_pair_rate * trans_a)
        if noise_b is None:
            noise_b = cfg.background_rate_bounds[1] + 2 * cfg.dark_count_rate
        base = dict(jitter_a=cfg.ogs_jitter, jitter_b=cfg.sat_jitter, misdetection=cfg.misdetection_prob,
                    resolution=cfg.tag_resolution)
        base.update(kw)
        return cls(cfg.e91_pair_rate, trans_a, trans_b, 0.0, noise_b, **base)

    @property
    def singles_a(self) -> float:
        return self.pair_rate * self.trans_a + self.noise_a

    @property
    def singles_b(self) -> float:
        return self.pair_rate * self.trans_b + self.noise_b


def _uniform_in(rng, rate, t0, t1):
    n = rng.poisson(rate * (t1 - t0))
    return t0 + (t1 - t0) * rng.random(n)


def _gated_uniform(rng, rate, centers, half):
    """Poisson events restricted to the union of [c - half, c + half]."""
    if len(centers) == 0 or rate == 0:
        return np.empty(0)
    c = np.sort(centers)
    lo, hi = c - half, c + half
    # merge overlapping windows
    new = np.ones(len(c), dtype=bool)
    new[1:] = lo[1:] > np.maximum.accumulate(hi)[:-1]
    starts = lo[new]
    stops = np.maximum.reduceat(hi, np.flatnonzero(new))
    lens = stops - starts
    counts = rng.poisson(rate * lens)
    idx = np.repeat(np.arange(len(starts)), counts)
    return starts[idx] + lens[idx] * rng.random(idx.size)


def _random_bits(rng, n):
    return rng.integers(0, 2, size=n, dtype=np.uint8)


def _finish(rng, t, basis, outcome, res, duration, rate, side, gate):
    keep = (t >= 0) & (t < duration)
    t, basis, outcome = t[keep], basis[keep], outcome[keep]
    ticks = np.round(t / res).astype(np.int64)
    order = np.argsort(ticks, kind="stable")
    return TagStream(ticks[order], basis[order], outcome[order], res, duration, rate, side, gate)


def generate_streams(sc: TagScenario, duration: float, seed: int, gate: float | None = None) -> tuple[TagStream, TagStream]:
    """OGS and satellite streams for one scenario.

    Poisson thinning splits pairs into both-detected, OGS-only and
    satellite-only classes. With ``gate`` set, OGS events that have no
    partner are generated only where some satellite event sees them at a
    delay within +-gate of the true delay, which is exact for every
    correlation searched inside that range.
    """
    if not duration > 0:
        raise ValueError("duration must be positive")
    rng = np.random.default_rng(seed)
    la, lb = sc.trans_a, sc.trans_b
    t_both = np.sort(_uniform_in(rng, sc.pair_rate * la * lb, 0.0, duration))
    t_bonly = _uniform_in(rng, sc.pair_rate * (1 - la) * lb, 0.0, duration)
    t_bnoise = _uniform_in(rng, sc.noise_b, 0.0, duration)

    n = len(t_both)
    ba = _random_bits(rng, n)
    bb = _random_bits(rng, n)
    oa = _random_bits(rng, n)
    flip = (rng.random(n) < sc.misdetection).astype(np.uint8)
    ob = np.where(ba == bb, oa ^ flip, _random_bits(rng, n)).astype(np.uint8)

    sig_a = sc.jitter_a * FWHM_TO_SIGMA
    sig_b = math.hypot(sc.jitter_b, sc.sync_jitter) * FWHM_TO_SIGMA
    ta_pair = t_both + sig_a * rng.standard_normal(n)
    tb_raw = np.concatenate([t_both, t_bonly])
    tb_pair = tb_raw + sig_b * rng.standard_normal(tb_raw.size)
    tb = np.concatenate([tb_pair, t_bnoise])
    tb = tb + sc.true_offset + sc.drift * tb

    m = t_bonly.size + t_bnoise.size
    b_basis = np.concatenate([bb, _random_bits(rng, m)])
    b_out = np.concatenate([ob, _random_bits(rng, m)])

    rate_a_free = sc.pair_rate * la * (1 - lb) + sc.noise_a
    if gate is None:
        ta_free = _uniform_in(rng, rate_a_free, 0.0, duration)
    else:
        # satellite times mapped back onto the OGS axis
        t_true = (tb - sc.true_offset) / (1 + sc.drift)
        ta_free = _gated_uniform(rng, rate_a_free, t_true, gate)
    k = ta_free.size
    ta = np.concatenate([ta_pair, ta_free])
    a_basis = np.concatenate([ba, _random_bits(rng, k)])
    a_out = np.concatenate([oa, _random_bits(rng, k)])

    res = sc.resolution
    a = _finish(rng, ta, a_basis, a_out, res, duration, sc.singles_a, OGS, gate)
    b = _finish(rng, tb, b_basis, b_out, res, duration, sc.singles_b, SATELLITE, gate)
    return a, b


# --- correlation ---------------------------------------------------------------

@dataclass(frozen=True)
class CorrelationResult:
    edges: np.ndarray  # delay bin edges, s
    counts: np.ndarray
    peak_delay: float
    peak_significance: float
    found: bool

    @property
    def bin_width(self) -> float:
        return float(self.edges[1] - self.edges[0])


def _delays(ta: np.ndarray, tb: np.ndarray, lo: float, hi: float) -> np.ndarray:
    """All tb - ta in [lo, hi); both inputs sorted, same units."""
    start = np.searchsorted(ta, tb - hi, side="right")
    stop = np.searchsorted(ta, tb - lo, side="right")
    cnt = stop - start
    if cnt.sum() == 0:
        return np.empty(0)
    j = np.repeat(np.arange(tb.size), cnt)
    offs = np.arange(cnt.sum()) - np.repeat(np.cumsum(cnt) - cnt, cnt)
    return tb[j] - ta[start[j] + offs]


SIGNIFICANCE_THRESHOLD = 5.0


def _histogram(ta, tb, bw, lo, nbins):
    edges_t = lo + bw * np.arange(nbins + 1)
    return edges_t, np.histogram(_delays(ta, tb, edges_t[0], edges_t[-1]), bins=edges_t)[0]


def _correlate_ticks(ta, tb, res, bin_width, search_range, center, threshold):
    """Histogram at two bin phases half a bin apart; keep the taller peak.

    A peak straddling a bin edge in one grid sits mid-bin in the other.
    """
    nbins = max(1, int(round(2 * search_range / bin_width)))
    bw = bin_width / res
    lo = center / res - nbins * bw / 2
    edges_t, counts = _histogram(ta, tb, bw, lo, nbins)
    e2, c2 = _histogram(ta, tb, bw, lo + bw / 2, nbins)
    if c2.max() > counts.max():
        edges_t, counts = e2, c2
    edges = edges_t * res
    k = int(np.argmax(counts))
    peak = 0.5 * (edges[k] + edges[k + 1])
    mask = np.ones(nbins, dtype=bool)
    mask[max(0, k - 1):k + 2] = False
    bg = counts[mask]
    if counts[k] == 0 or bg.size == 0:
        return CorrelationResult(edges, counts, peak, 0.0, False)
    mean = bg.mean()
    sd = bg.std()
    if sd == 0:
        sd = 1.0  # empty background: measure in single counts
    sig = max(0.0, (counts[k] - mean) / sd)
    return CorrelationResult(edges, counts, peak, float(sig), bool(sig >= threshold))


def cross_correlate(a: TagStream, b: TagStream, bin_width: float, search_range: float = 50e-9,
                    center: float = 0.0, threshold: float = SIGNIFICANCE_THRESHOLD) -> CorrelationResult:
    """Histogram of satellite-minus-OGS delays over center +- search_range."""
    if bin_width < a.resolution or not search_range > 0:
        raise ValueError("bin must be at least the tag resolution and range positive")
    if a.resolution != b.resolution:
        raise ValueError("streams use different tag resolutions")
    ta = a.ticks.astype(np.float64)
    tb = b.ticks.astype(np.float64)
    return _correlate_ticks(ta, tb, a.resolution, bin_width, search_range, center, threshold)


# --- sifting -------------------------------------------------------------------

@dataclass(frozen=True)
class SiftResult:
    pairs: np.ndarray  # (n, 2) indices into (a, b)
    compatible: int
    errors: int
    accidental_rate: float

    @property
    def n_pairs(self) -> int:
        return len(self.pairs)

    @property
    def measured_qber(self) -> float:
        return self.errors / self.compatible if self.compatible else float("nan")


def _candidates(a: TagStream, b: TagStream, offset: float, tau: float):
    res = a.resolution
    ta = a.ticks.astype(np.float64)
    tb = b.ticks.astype(np.float64)
    off = offset / res
    half = tau / 2 / res
    start = np.searchsorted(ta, tb - off - half, side="left")
    stop = np.searchsorted(ta, tb - off + half, side="right")
    cnt = stop - start
    jb = np.repeat(np.arange(tb.size), cnt)
    ia = start[jb] + (np.arange(cnt.sum()) - np.repeat(np.cumsum(cnt) - cnt, cnt))
    return ia, jb, ta, tb, off


def sift_coincidences(a: TagStream, b: TagStream, offset: float, tau: float) -> SiftResult:
    """Greedy nearest-neighbour matching of b events to a events at delay ``offset``.

    Candidates within +-tau/2 are accepted in order of distance from the
    expected delay; ties go to the earlier pair. Each event is used once.
    """
    ia, jb, ta, tb, off = _candidates(a, b, offset, tau)
    dist = np.abs((tb[jb] - ta[ia]) - off)
    order = np.lexsort((np.minimum(ta[ia], tb[jb]), ta[ia] + tb[jb], dist))
    used_a = np.zeros(len(a), dtype=bool)
    used_b = np.zeros(len(b), dtype=bool)
    keep = []
    for k in order:
        i, j = ia[k], jb[k]
        if used_a[i] or used_b[j]:
            continue
        used_a[i] = used_b[j] = True
        keep.append((i, j))
    pairs = np.array(keep, dtype=np.int64).reshape(-1, 2)
    same = a.basis[pairs[:, 0]] == b.basis[pairs[:, 1]]
    err = a.outcome[pairs[:, 0]] != b.outcome[pairs[:, 1]]
    # accidental level from a displaced window well away from the peak
    shift = max(50 * tau, 10e-9)
    ia2, _, _, _, _ = _candidates(a, b, offset + shift, tau)
    span = max(a.duration, b.duration)
    return SiftResult(pairs, int(same.sum()), int((same & err).sum()), ia2.size / span)


def swap_sides(a: TagStream, b: TagStream) -> tuple[TagStream, TagStream]:
    return b, a


# --- synchronisation -----------------------------------------------------------

def capture_fraction(fwhm: float, tau: float) -> float:
    """Fraction of a Gaussian coincidence peak inside +-tau/2."""
    if fwhm == 0:
        return 1.0
    return math.erf(tau / 2 / (fwhm * FWHM_TO_SIGMA * math.sqrt(2)))


def sync_loss_estimate(t_a: float, t_b: float, t_sync: float, tau: float) -> Transmission:
    """Coincidences lost to clock-synchronisation jitter, relative to none."""
    if min(t_a, t_b, tau) <= 0 or t_sync < 0:
        raise ValueError("jitters and window must be positive")
    with_sync = capture_fraction(math.sqrt(t_a**2 + t_b**2 + t_sync**2), tau)
    without = capture_fraction(math.hypot(t_a, t_b), tau)
    return Transmission(min(1.0, with_sync / without))


@dataclass(frozen=True)
class SyncResult:
    chunk_starts: np.ndarray
    offsets: np.ndarray
    found: np.ndarray
    significance: np.ndarray
    drift_fit: float | None

    @property
    def lock_fraction(self) -> float:
        return float(self.found.mean()) if self.found.size else 0.0

    @property
    def locked(self) -> bool:
        return self.lock_fraction >= 0.95


def chunked_sync(a: TagStream, b: TagStream, t_md: float, drift: float = 0.0, bin_width: float = 80e-12,
                 search_range: float = 50e-9, initial_offset: float = 0.0) -> SyncResult:
    """Correlate chunk by chunk, tracking the offset.

    Within a chunk, satellite times are corrected with the predicted
    ``drift`` so the peak stays narrow. The search centre follows the last
    found offset advanced by drift * t_md. The drift estimate is the slope
    of a straight-line fit to the found offsets.
    """
    if not t_md > 0:
        raise ValueError("chunk duration must be positive")
    span = min(a.duration, b.duration)
    n = int(math.floor(span / t_md + 1e-9))
    if n < 1:
        raise ValueError("streams are shorter than one chunk")
    res = a.resolution
    ta = a.ticks.astype(np.float64)
    tb_all = b.ticks.astype(np.float64)
    starts = t_md * np.arange(n)
    offsets = np.full(n, np.nan)
    found = np.zeros(n, dtype=bool)
    sig = np.zeros(n)
    center = initial_offset
    for k, t0 in enumerate(starts):
        lo, hi = np.searchsorted(tb_all, [t0 / res, (t0 + t_md) / res])
        tb = tb_all[lo:hi]
        tb_corr = tb - drift * (tb - t0 / res)
        r = _correlate_ticks(ta, tb_corr, res, bin_width, search_range, center, SIGNIFICANCE_THRESHOLD)
        sig[k] = r.peak_significance
        if r.found:
            found[k] = True
            offsets[k] = r.peak_delay
            center = r.peak_delay
        center += drift * t_md
    ok = found
    fit = None
    if ok.sum() >= 2:
        fit = float(np.polyfit(starts[ok], offsets[ok], 1)[0])
    return SyncResult(starts, offsets, found, sig, fit)


# --- I/O -----------------------------------------------------------------------

def write_binary(path: str | Path, s: TagStream) -> None:
    rec = np.empty(len(s), dtype=TAG_DTYPE)
    rec["t"] = s.ticks.astype(np.uint64)
    rec["flags"] = (s.basis & 1) | ((s.outcome & 1) << 1)
    rec.tofile(path)


def read_binary(path: str | Path, resolution: float = 10e-12, side: str = SATELLITE,
                nominal_rate: float = 0.0, duration: float | None = None) -> TagStream:
    rec = np.fromfile(path, dtype=TAG_DTYPE)
    ticks = rec["t"].astype(np.int64)
    if duration is None:
        duration = float(ticks[-1] + 1) * resolution if len(ticks) else 0.0
    return TagStream(ticks, (rec["flags"] & 1).astype(np.uint8), ((rec["flags"] >> 1) & 1).astype(np.uint8),
                     resolution, duration, nominal_rate, side)


def write_csv(path: str | Path, s: TagStream) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["time_ticks", "basis", "outcome"])
        w.writerows(zip(s.ticks.tolist(), s.basis.tolist(), s.outcome.tolist()))


def read_csv(path: str | Path, resolution: float = 10e-12, side: str = SATELLITE,
             nominal_rate: float = 0.0, duration: float | None = None) -> TagStream:
    data = np.loadtxt(path, delimiter=",", skiprows=1, dtype=np.int64, ndmin=2)
    ticks = data[:, 0] if data.size else np.empty(0, dtype=np.int64)
    if duration is None:
        duration = float(ticks[-1] + 1) * resolution if len(ticks) else 0.0
    basis = data[:, 1].astype(np.uint8) if data.size else np.empty(0, dtype=np.uint8)
    out = data[:, 2].astype(np.uint8) if data.size else np.empty(0, dtype=np.uint8)
    return TagStream(ticks, basis, out, resolution, duration, nominal_rate, side)
