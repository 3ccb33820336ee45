"""Data volume, downlink time, on-board compute and SWaP ledgers."""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Sequence

import numpy as np

from . import channel, mission
from .config import MissionConfig
from .geometry import PassGeometry
from .optimize import bisect

FLAG_BITS = 2  # basis + outcome
T_MAX_GRID = 1e-6


def eta_sep(rate: float, t_max, t_qc: float):
    """Probability that no gap between successive events exceeds ``t_max`` within ``t_qc``."""
    x = rate * np.asarray(t_max, dtype=float)
    base = -np.expm1(-x) - x * np.exp(-x)  # 1 - (1 + x) e^-x without cancellation
    out = np.exp(t_qc / np.asarray(t_max, dtype=float) * np.log(np.maximum(base, 1e-300)))
    return float(out) if out.ndim == 0 else out


def bits_per_tag(t_max: float, t_tt: float) -> int:
    return int(math.ceil(math.log2(t_max / t_tt))) + FLAG_BITS


def tag_encoding(rate_min: float, t_qc: float, t_tt: float, overflow_budget: float) -> tuple[float, int]:
    """Smallest gap limit (on a 1 us grid) meeting the overflow budget, and the tag width."""
    if min(rate_min, t_qc, t_tt) <= 0 or not 0 < overflow_budget < 1:
        raise ValueError("inputs must be positive and the budget in (0, 1)")
    target = 1 - overflow_budget
    if eta_sep(rate_min, T_MAX_GRID, t_qc) >= target:
        t_max = T_MAX_GRID
    else:
        hi = T_MAX_GRID
        while eta_sep(rate_min, hi, t_qc) < target:
            hi *= 2
        root = bisect(lambda t: eta_sep(rate_min, t, t_qc) - target, hi / 2, hi, tol=T_MAX_GRID / 4)
        t_max = math.ceil(root / T_MAX_GRID) * T_MAX_GRID
        if eta_sep(rate_min, t_max, t_qc) < target:
            t_max += T_MAX_GRID
    return t_max, bits_per_tag(t_max, t_tt)


@dataclass(frozen=True)
class DataBudget:
    t_max: float
    bits_per_tag: int
    tags: int
    total_bits: int
    downlink_seconds: float
    reply_bits: float

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def pass_data_volume(tags: int, bits: int, downlink_rate: float = 250e3, reply_fraction: float = 0.0,
                     t_max: float = float("nan")) -> DataBudget:
    if tags < 0 or bits <= 0 or downlink_rate <= 0 or not 0 <= reply_fraction <= 1:
        raise ValueError("invalid data-volume inputs")
    total = int(tags) * int(bits)
    return DataBudget(t_max, int(bits), int(tags), total, total / downlink_rate, reply_fraction * total)


@dataclass(frozen=True)
class PassCounts:
    """Satellite tags and sifted coincidences of one connection."""

    tags: float
    coincidences: float
    sifted: float
    connection_s: float

    @property
    def reply_fraction(self) -> float:
        return self.sifted / self.tags if self.tags else 0.0


def pass_counts(p: PassGeometry, r0: float, cfg: MissionConfig, connection: float | None = None) -> PassCounts:
    """Expected counts for a connection of ``connection`` seconds (default t_QC).

    Rates are averaged over the pass and scaled to the connection length.
    The satellite registers every photon of the pair source that survives
    the link and its own receiver chain, plus noise.
    """
    connection = cfg.max_quantum_connection if connection is None else connection
    sat = channel.link_transmission(p.zenith, r0, cfg, p.range) * channel.fixed_chain_linear(channel.DSP, cfg)
    singles = cfg.e91_pair_rate * sat + channel.total_noise_rate(p.zenith, cfg)
    coinc = mission.rate_series(p, r0, channel.E91, cfg).gain_rate
    d = p.duration
    mean_singles = np.trapezoid(singles, p.t) / d
    mean_coinc = np.trapezoid(coinc, p.t) / d
    tags = mean_singles * connection
    c = mean_coinc * connection
    return PassCounts(float(tags), float(c), float(c / 2), connection)


# --- compute -------------------------------------------------------------------

# LDPC belief propagation: 50 iterations, two half-steps, column weight 3, ~3 ops per edge
EC_OPS_PER_BIT = 50 * 2 * 3 * 3
# Toeplitz hashing on 32-bit words, 2^18-bit blocks compressed to half
PA_OPS_PER_BIT = 2**18 * 0.5 / 32
EC_BUFFER_BYTES = 15e6


@dataclass(frozen=True)
class PPResources:
    ops_total: float
    ops_per_second: float
    memory_bytes: float

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def pp_resources(n_tag: int, m_key: int, realtime_window: float, delay_buffer_bytes: float = 0.0,
                 ec_ops_per_bit: float = EC_OPS_PER_BIT, pa_ops_per_bit: float = PA_OPS_PER_BIT,
                 ec_buffer_bytes: float = EC_BUFFER_BYTES) -> PPResources:
    """Operation and memory estimate for on-board post-processing."""
    if n_tag < 0 or m_key < 0 or realtime_window <= 0:
        raise ValueError("counts must be non-negative and the window positive")
    ops = 18 * n_tag + 15 * m_key + (ec_ops_per_bit + pa_ops_per_bit) * m_key
    mem = m_key / 8 + (ec_buffer_bytes if m_key else 0.0) + delay_buffer_bytes
    return PPResources(ops, ops / realtime_window, mem)


def worst_case_pp(cfg: MissionConfig, bits: int = 33, buffered_passes: int = 3) -> PPResources:
    """Every detector at its maximum rate for a full connection.

    Half the tags survive sifting. Tags of ``buffered_passes`` connections
    are held in case the classical link is delayed or interrupted.
    """
    n_tag = int(cfg.sat_max_rate * cfg.max_quantum_connection)
    m_key = n_tag // 2
    delay = buffered_passes * n_tag * bits / 8
    return pp_resources(n_tag, m_key, cfg.max_quantum_connection, delay)


# --- SWaP ----------------------------------------------------------------------

SUPPLY = "supply"
SWAP_COLUMNS = ["name", "size_u", "mass_g", "peak_mw", "energy_mwh", "category"]


@dataclass(frozen=True)
class SwapItem:
    name: str
    size_u: float
    mass_g: float
    peak_mw: float
    energy_mwh: float
    category: str


@dataclass(frozen=True)
class SwapLedger:
    """Column totals and margins.

    Rows in the ``supply`` category (batteries, solar cells) list capacity,
    not consumption, so they count towards size and mass only.
    """

    items: tuple[SwapItem, ...]
    available: dict = field(default_factory=lambda: {"size_u": 3.25, "mass_g": 4000.0, "peak_mw": 67000.0,
                                                     "energy_mwh": 21000.0})
    always_on_mwh: float = 13500.0
    battery_capacity_mwh: float = 60000.0
    max_discharge: float = 0.30

    @property
    def totals(self) -> dict[str, float]:
        consumers = [i for i in self.items if i.category != SUPPLY]
        return {
            "size_u": round(sum(i.size_u for i in self.items), 9),
            "mass_g": round(sum(i.mass_g for i in self.items), 9),
            "peak_mw": round(sum(i.peak_mw for i in consumers), 9),
            "energy_mwh": round(sum(i.energy_mwh for i in consumers), 9),
        }

    @property
    def margins(self) -> dict[str, float]:
        t = self.totals
        return {k: self.available[k] - t[k] for k in t}

    @property
    def violations(self) -> list[str]:
        return [k for k, v in self.margins.items() if v < -1e-9]

    @property
    def orbit_energy_mwh(self) -> float:
        """Measurement-orbit consumption including always-on systems."""
        return self.totals["energy_mwh"] + self.always_on_mwh

    @property
    def battery_required_mwh(self) -> float:
        return self.totals["energy_mwh"] / self.max_discharge

    @property
    def battery_ok(self) -> bool:
        return self.battery_required_mwh <= self.battery_capacity_mwh

    def to_dict(self) -> dict:
        return {
            "totals": self.totals,
            "available": dict(self.available),
            "margins": self.margins,
            "violations": self.violations,
            "always_on_mwh": self.always_on_mwh,
            "orbit_energy_mwh": self.orbit_energy_mwh,
            "battery_required_mwh": self.battery_required_mwh,
            "battery_capacity_mwh": self.battery_capacity_mwh,
            "battery_ok": self.battery_ok,
        }

    def report(self) -> str:
        t, a, m = self.totals, self.available, self.margins
        lines = [f"{'':14s}{'total':>12s}{'available':>12s}{'margin':>12s}"]
        for k in ("size_u", "mass_g", "peak_mw", "energy_mwh"):
            lines.append(f"{k:14s}{t[k]:12g}{a[k]:12g}{m[k]:12g}")
        lines.append(f"always-on energy per orbit   {self.always_on_mwh:g} mWh")
        lines.append(f"orbit energy incl. always-on {self.orbit_energy_mwh:g} mWh")
        lines.append(f"battery required {self.battery_required_mwh / 1e3:.1f} Wh of "
                     f"{self.battery_capacity_mwh / 1e3:.1f} Wh: {'ok' if self.battery_ok else 'INSUFFICIENT'}")
        if self.violations:
            lines.append("budget violations: " + ", ".join(self.violations))
        return "\n".join(lines)


def read_swap_items(path: str | Path) -> list[SwapItem]:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != SWAP_COLUMNS:
            raise ValueError(f"{path}:1: expected header {','.join(SWAP_COLUMNS)}")
        items = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 6:
                raise ValueError(f"{path}:{lineno}: expected 6 columns, got {len(row)}")
            try:
                items.append(SwapItem(row[0].strip(), float(row[1]), float(row[2]), float(row[3]),
                                      float(row[4]), row[5].strip()))
            except ValueError:
                raise ValueError(f"{path}:{lineno}: malformed row {row!r}") from None
    return items


def swap_ledger(items: Sequence[SwapItem] | str | Path, **kw) -> SwapLedger:
    if isinstance(items, (str, Path)):
        items = read_swap_items(items)
    return SwapLedger(tuple(items), **kw)


def bundled_table3() -> SwapLedger:
    ref = resources.files("cubeqkd") / "data" / "table3.csv"
    with resources.as_file(ref) as p:
        return swap_ledger(p)


def write_json(path: str | Path, payload: dict) -> None:
    Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
