"""Per-pass and annual secure-key yields under empirical weather."""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from datetime import datetime, timedelta
from importlib import resources
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from . import channel, protocol
from .config import MissionConfig
from .geometry import PassCatalog, PassGeometry

USABLE_R0 = 0.05  # nights below this are treated as lost to weather


@dataclass(frozen=True)
class FriedDistribution:
    """Nightly Fried-parameter histogram.

    ``bins`` holds (low m, high m, nights). Nights of the year that are not
    in any bin (cloud, poor seeing) draw r0 = 0 and yield no key.
    """

    bins: tuple[tuple[float, float, int], ...]
    nights_per_year: int = 365

    def __post_init__(self):
        if not self.bins:
            raise ValueError("Fried distribution has no bins")
        prev_hi = -math.inf
        for lo, hi, n in self.bins:
            if not (0 < lo <= hi):
                raise ValueError(f"bad bin edges ({lo}, {hi})")
            if lo < prev_hi:
                raise ValueError("bins must be ordered and disjoint")
            if n < 0:
                raise ValueError(f"negative night count {n}")
            prev_hi = hi
        if self.usable_nights == 0:
            raise ValueError("Fried distribution has zero nights")
        if self.usable_nights > self.nights_per_year:
            raise ValueError("more binned nights than nights per year")

    @classmethod
    def delta(cls, r0: float, nights: int = 365) -> "FriedDistribution":
        """Every night has exactly ``r0``."""
        return cls(((r0, r0, nights),), nights)

    @property
    def usable_nights(self) -> int:
        return int(sum(n for _, _, n in self.bins))

    @property
    def mean_r0(self) -> float:
        w = np.array([n for _, _, n in self.bins], dtype=float)
        mid = np.array([(lo + hi) / 2 for lo, hi, _ in self.bins])
        return float((w * mid).sum() / w.sum())

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        """Draw ``size`` nightly r0 values; unusable nights are 0."""
        counts = np.array([n for _, _, n in self.bins], dtype=float)
        p = np.append(counts, self.nights_per_year - counts.sum()) / self.nights_per_year
        k = rng.choice(len(p), size=size, p=p)
        u = rng.random(size)
        lo = np.array([b[0] for b in self.bins] + [0.0])
        hi = np.array([b[1] for b in self.bins] + [0.0])
        return lo[k] + u * (hi[k] - lo[k])


def ingest_fried_histogram(path: str | Path, nights_per_year: int = 365) -> FriedDistribution:
    """Read a ``r0_low_cm,r0_high_cm,nights`` CSV."""
    bins = []
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ValueError(f"{path}: empty weather file")
    header = [c.strip() for c in rows[0]]
    if header != ["r0_low_cm", "r0_high_cm", "nights"]:
        raise ValueError(f"{path}:1: expected header r0_low_cm,r0_high_cm,nights")
    for lineno, row in enumerate(rows[1:], start=2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != 3:
            raise ValueError(f"{path}:{lineno}: expected 3 columns, got {len(row)}")
        try:
            lo, hi, n = float(row[0]), float(row[1]), int(row[2])
        except ValueError:
            raise ValueError(f"{path}:{lineno}: malformed row {row!r}") from None
        if n < 0:
            raise ValueError(f"{path}:{lineno}: negative night count")
        bins.append((lo / 100, hi / 100, n))
    if not bins:
        raise ValueError(f"{path}: no data rows")
    return FriedDistribution(tuple(bins), nights_per_year)


def bundled_weather() -> FriedDistribution:
    ref = resources.files("cubeqkd") / "data" / "fried_histogram.csv"
    with resources.as_file(ref) as p:
        return ingest_fried_histogram(p)


# --- per pass ----------------------------------------------------------------

@dataclass(frozen=True)
class PassSeries:
    """Instantaneous per-sample quantities of one protocol along a pass."""

    t: np.ndarray
    gain_rate: np.ndarray  # detections (coincidences) per second
    qber: np.ndarray
    secure_rate: np.ndarray  # instantaneous, clamped at 0
    single_gain_rate: np.ndarray | None = None
    single_qber: np.ndarray | None = None


def rate_series(p: PassGeometry, r0: float, proto: str, cfg: MissionConfig) -> PassSeries:
    if r0 <= 0:
        z = np.zeros(len(p))
        e = np.full(len(p), cfg.noise_error_prob)
        if proto == channel.DSP:
            return PassSeries(p.t, z, e, z, z, e)
        return PassSeries(p.t, z, e, z)
    lb = channel.bob_arm_transmission(p.zenith, r0, proto, cfg, p.range)
    y0b = channel.dark_yield(p.zenith, cfg)
    e0, ed, f = cfg.noise_error_prob, cfg.misdetection_prob, cfg.pp_efficiency
    if proto == channel.E91:
        tau = cfg.coincidence_window
        q = protocol.e91_gain(cfg.mu_e91, cfg.ogs_arm_transmission, lb, y0b)
        e = protocol.e91_qber(cfg.mu_e91, cfg.ogs_arm_transmission, lb, y0b, e0, ed, q)
        r = 0.5 * q / tau * protocol.e91_key_fraction(e, f)
        return PassSeries(p.t, q / tau, e, np.maximum(r, 0.0))
    if proto == channel.DSP:
        rep = cfg.dsp_rep_rate
        q, e, q1, e1 = protocol.dsp_terms(cfg.mu_dsp, lb, y0b, e0, ed)
        r = 0.25 * rep * protocol.dsp_bracket(q, e, q1, e1, f)
        return PassSeries(p.t, q * rep, e, np.maximum(r, 0.0), q1 * rep, e1)
    raise ValueError(f"unknown protocol {proto!r}")


def _cumtrapz(t: np.ndarray, y: np.ndarray) -> np.ndarray:
    out = np.zeros(len(t))
    if len(t) > 1:
        out[1:] = np.cumsum(0.5 * (y[1:] + y[:-1]) * np.diff(t))
    return out


def _h2(x):
    return protocol.binary_entropy(np.clip(x, 0.0, 1.0))


@dataclass(frozen=True)
class WindowResult:
    start: float  # seconds, same time base as the pass
    stop: float
    key_bits: float
    mean_qber: float


def best_window(s: PassSeries, proto: str, cfg: MissionConfig, t_qc: float | None = None) -> WindowResult:
    """Exhaustive search over sample pairs for the window of maximal key.

    The key of a window uses coincidence-weighted mean QBERs over that
    window, so it is not simply the integral of the instantaneous rate.
    """
    t_qc = cfg.max_quantum_connection if t_qc is None else t_qc
    t = s.t
    n = len(t)
    f = cfg.pp_efficiency
    cq = _cumtrapz(t, s.gain_rate)
    cqe = _cumtrapz(t, s.gain_rate * s.qber)
    i, j = np.triu_indices(n, k=1)
    keep = t[j] - t[i] <= t_qc + 1e-9
    i, j = i[keep], j[keep]
    sq = cq[j] - cq[i]
    with np.errstate(divide="ignore", invalid="ignore"):
        e_bar = np.where(sq > 0, (cqe[j] - cqe[i]) / sq, cfg.noise_error_prob)
    if proto == channel.E91:
        bits = 0.5 * sq * (1 - (1 + f) * _h2(e_bar))
    else:
        c1 = _cumtrapz(t, s.single_gain_rate)
        c1e = _cumtrapz(t, s.single_gain_rate * s.single_qber)
        s1 = c1[j] - c1[i]
        with np.errstate(divide="ignore", invalid="ignore"):
            e1_bar = np.where(s1 > 0, (c1e[j] - c1e[i]) / s1, cfg.noise_error_prob)
        # gain rates already include R_rep; the remaining prefactor is 1/4
        bits = 0.25 * (s1 * (1 - _h2(e1_bar)) - f * sq * _h2(e_bar))
    if len(bits) == 0 or bits.max() <= 0:
        t0 = float(t[0]) if n else 0.0
        return WindowResult(t0, t0, 0.0, float("nan"))
    k = int(np.argmax(bits))
    return WindowResult(float(t[i[k]]), float(t[j[k]]), float(bits[k]), float(e_bar[k]))


@dataclass(frozen=True)
class PassYield:
    pass_id: int
    r0: float
    epoch: datetime
    windows: dict[str, tuple[float, float]] = field(default_factory=dict)
    key_bits: dict[str, float] = field(default_factory=dict)
    mean_qber: dict[str, float] = field(default_factory=dict)

    @property
    def key_bits_e91(self) -> float:
        return self.key_bits.get(channel.E91, 0.0)

    @property
    def key_bits_dsp(self) -> float:
        return self.key_bits.get(channel.DSP, 0.0)

    def window_utc(self, proto: str) -> tuple[datetime, datetime]:
        a, b = self.windows[proto]
        return self.epoch + timedelta(seconds=a), self.epoch + timedelta(seconds=b)

    def to_dict(self) -> dict:
        out = {"pass_id": self.pass_id, "r0_m": self.r0, "protocols": {}}
        for proto in self.key_bits:
            a, b = self.window_utc(proto)
            q = self.mean_qber[proto]
            out["protocols"][proto] = {
                "key_bits": self.key_bits[proto],
                "window_start": a.isoformat(),
                "window_stop": b.isoformat(),
                "window_s": self.windows[proto][1] - self.windows[proto][0],
                "mean_qber": None if math.isnan(q) else q,
            }
        return out


def pass_key_yield(p: PassGeometry, r0: float, protocols: str | Sequence[str] = channel.PROTOCOLS,
                   cfg: MissionConfig | None = None, pass_id: int = 0, t_qc: float | None = None) -> PassYield:
    """Key for one pass at fixed ``r0``, each protocol with its own best window."""
    cfg = MissionConfig() if cfg is None else cfg
    if isinstance(protocols, str):
        protocols = (protocols,)
    windows, bits, qbers = {}, {}, {}
    for proto in protocols:
        w = best_window(rate_series(p, r0, proto, cfg), proto, cfg, t_qc)
        windows[proto] = (w.start, w.stop)
        bits[proto] = w.key_bits
        qbers[proto] = w.mean_qber
    return PassYield(pass_id, r0, p.epoch, windows, bits, qbers)


# --- annual ------------------------------------------------------------------

def night_index(p: PassGeometry, longitude: float) -> int:
    """Local-solar-night number of a pass; a night runs noon to noon."""
    start = p.start
    local = start + timedelta(seconds=longitude / (2 * math.pi) * 86400.0) - timedelta(hours=12)
    return local.toordinal()


@dataclass(frozen=True)
class AnnualYield:
    bits: dict[str, float]
    usable_seconds: float
    usable_passes: int
    pass_count: int
    nights: int
    usable_nights: int
    seed: int

    def to_dict(self) -> dict:
        return {
            "bits": dict(self.bits),
            "usable_seconds": self.usable_seconds,
            "usable_passes": self.usable_passes,
            "pass_count": self.pass_count,
            "nights_with_passes": self.nights,
            "usable_nights": self.usable_nights,
            "seed": self.seed,
        }


def nightly_r0(catalog: PassCatalog, weather: FriedDistribution, seed: int, longitude: float) -> dict[int, float]:
    """Deterministic pre-pass: one r0 draw per calendar night, in night order."""
    nights = sorted({night_index(p, longitude) for p in catalog.passes})
    if not nights:
        return {}
    rng = np.random.default_rng(seed)
    first = nights[0]
    # draw for every night in the span so the stream does not depend on which nights have passes
    draws = weather.sample(rng, nights[-1] - first + 1)
    return {n: float(draws[n - first]) for n in nights}


def annual_yield(catalog: PassCatalog, weather: FriedDistribution, cfg: MissionConfig | None = None,
                 seed: int = 0, protocols: Sequence[str] = channel.PROTOCOLS) -> AnnualYield:
    cfg = MissionConfig() if cfg is None else cfg
    if catalog.pass_count == 0:
        raise ValueError("empty pass catalog")
    r0_by_night = nightly_r0(catalog, weather, seed, cfg.ogs_longitude)
    bits = {proto: 0.0 for proto in protocols}
    usable_s, usable_p = 0.0, 0
    for k, p in enumerate(catalog.passes):
        r0 = r0_by_night[night_index(p, cfg.ogs_longitude)]
        if r0 < USABLE_R0 - 1e-12:
            continue
        usable_s += p.duration
        usable_p += 1
        y = pass_key_yield(p, r0, protocols, cfg, pass_id=k)
        for proto in protocols:
            bits[proto] += y.key_bits[proto]
    usable_nights = sum(1 for v in r0_by_night.values() if v >= USABLE_R0 - 1e-12)
    return AnnualYield(bits, usable_s, usable_p, catalog.pass_count, len(r0_by_night), usable_nights, seed)


def write_annual_json(path: str | Path, result: AnnualYield) -> None:
    Path(path).write_text(json.dumps(result.to_dict(), indent=2, sort_keys=True) + "\n")


def write_rate_series_csv(path: str | Path, p: PassGeometry, r0: float, cfg: MissionConfig,
                          protocols: Iterable[str] = channel.PROTOCOLS) -> None:
    protocols = list(protocols)
    series = {proto: rate_series(p, r0, proto, cfg) for proto in protocols}
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        head = ["t_s", "zenith_deg", "range_km"]
        for proto in protocols:
            head += [f"{proto.lower()}_qber", f"{proto.lower()}_rsec_bits_s"]
        w.writerow(head)
        for k in range(len(p)):
            row = [f"{p.t[k]:.1f}", f"{math.degrees(p.zenith[k]):.4f}", f"{p.range[k] / 1e3:.3f}"]
            for proto in protocols:
                s = series[proto]
                row += [f"{s.qber[k]:.6g}", f"{s.secure_rate[k]:.6g}"]
            w.writerow(row)
