"""Gain, QBER and secure-key-rate models for E91 and decoy-state BB84.

Y_0A (noise at the ground detectors) is taken as zero throughout.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from . import channel
from .config import MissionConfig, linear_to_db
from .optimize import bisect, golden_section_max


class NoKeyError(RuntimeError):
    """No positive secure key exists anywhere in the searched domain."""


@dataclass(frozen=True)
class ProtocolRates:
    gain: float
    qber: float
    secure_rate: float
    single_photon_gain: float | None = None
    single_photon_qber: float | None = None

    @property
    def snr(self) -> float:
        return snr_from_qber(self.qber)


def binary_entropy(x):
    """H2 in bits, vectorised; H2(0) = H2(1) = 0."""
    x = np.asarray(x, dtype=float)
    if np.any((x < 0) | (x > 1)):
        raise ValueError("binary entropy argument must lie in [0, 1]")
    with np.errstate(divide="ignore", invalid="ignore"):
        h = -x * np.log2(x) - (1 - x) * np.log2(1 - x)
    h = np.where((x == 0) | (x == 1), 0.0, h)
    return float(h) if h.ndim == 0 else h


def snr_from_qber(E: float) -> float:
    if not 0 <= E <= 1:
        raise ValueError("QBER must lie in [0, 1]")
    if E == 0:
        return math.inf
    return 1 / E - 1


def qber_from_snr(snr: float) -> float:
    if snr < 0:
        raise ValueError("SNR must be non-negative")
    return 1 / (1 + snr)


# --- E91 -----------------------------------------------------------------

def e91_gain(mu, la, lb, y0b, printed_form: bool = False):
    """Coincidence probability per window.

    The default is the four-term gain with Y_0A = 0. ``printed_form``
    reproduces a three-term variant lacking the Alice-only term, which
    gives gain 1 at zero transmission; it exists for comparison only.
    """
    a = la * mu / 2
    b = lb * mu / 2
    c = 1 + a + b - la * lb * mu / 2
    u, v, w = 1 / (1 + a), 1 / (1 + b), 1 / c
    # v^2 - w^2 and the noiseless joint term, factored to avoid cancellation
    v2_w2 = a * (1 - lb) * v * w * (v + w)
    if printed_form:
        return 1 - (1 - y0b) * v2_w2
    joint = a * (2 + a) * u**2 * b * (2 + b) * v**2 + a * b * (1 + 2 / mu) * w * u * v * (w + u * v)
    return joint + y0b * v2_w2


def e91_qber(mu, la, lb, y0b, e0, ed, gain=None):
    q = e91_gain(mu, la, lb, y0b) if gain is None else gain
    a = la * mu / 2
    b = lb * mu / 2
    c = 1 + a + b - la * lb * mu / 2
    corr = (e0 - ed) * la * lb * mu * (1 + mu / 2) / ((1 + a) * (1 + b) * c)
    with np.errstate(divide="ignore", invalid="ignore"):
        e = e0 - corr / q
    return np.where(np.asarray(q) > 0, e, e0)


def e91_key_fraction(E, f):
    return 1 - (1 + f) * binary_entropy(E)


def e91_rates(mu: float, la: float, lb: float, y0b: float, e0: float, ed: float,
              tau: float, f: float) -> ProtocolRates:
    if not mu > 0:
        raise ValueError("mean photon number must be positive")
    if not (0 <= la <= 1 and 0 <= lb <= 1):
        raise ValueError("transmissions must lie in [0, 1]")
    if not 0 <= y0b < 1:
        raise ValueError("dark yield must lie in [0, 1)")
    q = float(e91_gain(mu, la, lb, y0b))
    e = float(e91_qber(mu, la, lb, y0b, e0, ed, q))
    r = 0.5 * q / tau * e91_key_fraction(e, f)
    return ProtocolRates(q, e, max(0.0, float(r)))


# --- DSP -----------------------------------------------------------------

def dsp_terms(mu, lb, y0b, e0, ed):
    """(Q, E, Q1, E1) for signal pulses of mean photon number ``mu``."""
    det = -np.expm1(-mu * np.asarray(lb, dtype=float))
    q = det + y0b
    e = (ed * det + e0 * y0b) / q
    q1 = (lb + y0b) * mu * np.exp(-mu)
    e1 = (ed * lb + e0 * y0b) / (lb + y0b)
    return q, e, q1, e1


def dsp_bracket(q, e, q1, e1, f):
    return q1 * (1 - binary_entropy(e1)) - f * q * binary_entropy(e)


def dsp_rates(mu: float, lb: float, y0b: float, e0: float, ed: float, rep_rate: float, f: float,
              printed_prefactor: bool = False) -> ProtocolRates:
    """Decoy-state rates.

    The secure rate is R_rep/4 times the bracket. Half the detections
    are lost to basis mismatch and half of the pulses are decoys.
    ``printed_prefactor`` multiplies by an extra mu, a variant kept for
    comparison; the bracketed gains already carry the mu dependence.
    """
    if not mu > 0:
        raise ValueError("mean photon number must be positive")
    if not 0 < lb <= 1:
        raise ValueError("transmission must lie in (0, 1]")
    if not 0 <= y0b < 1:
        raise ValueError("dark yield must lie in [0, 1)")
    q, e, q1, e1 = (float(v) for v in dsp_terms(mu, lb, y0b, e0, ed))
    r = 0.25 * rep_rate * dsp_bracket(q, e, q1, e1, f)
    if printed_prefactor:
        r *= mu
    return ProtocolRates(q, e, max(0.0, float(r)), q1, e1)


# --- scenario helpers ----------------------------------------------------

def rates_at(phi: float, r0: float, protocol: str, cfg: MissionConfig,
             tau: float | None = None, noise: float | None = None) -> ProtocolRates:
    """Instantaneous rates at zenith angle ``phi`` with the channel defaults."""
    tau = cfg.coincidence_window if tau is None else tau
    lb = channel.bob_arm_transmission(phi, r0, protocol, cfg)
    rate = channel.total_noise_rate(phi, cfg) if noise is None else noise
    y0b = rate * tau
    if protocol == channel.E91:
        return e91_rates(cfg.mu_e91, cfg.ogs_arm_transmission, lb, y0b,
                         cfg.noise_error_prob, cfg.misdetection_prob, tau, cfg.pp_efficiency)
    return dsp_rates(cfg.mu_dsp, lb, y0b, cfg.noise_error_prob, cfg.misdetection_prob,
                     cfg.dsp_rep_rate, cfg.pp_efficiency)


def max_qber_e91(f: float) -> float:
    """QBER at which 1 - (1+f) H2(E) vanishes."""
    if f < 1:
        raise ValueError("post-processing efficiency must be >= 1")
    return bisect(lambda e: e91_key_fraction(e, f), 1e-9, 0.5, tol=1e-9)


def _dsp_threshold_lb(cfg: MissionConfig, noise_rate: float, mu: float | None = None) -> float:
    mu = cfg.mu_dsp if mu is None else mu
    y0b = noise_rate * cfg.coincidence_window
    g = lambda x: dsp_bracket(*dsp_terms(mu, 10 ** x, y0b, cfg.noise_error_prob, cfg.misdetection_prob), cfg.pp_efficiency)
    return 10 ** bisect(g, -12.0, 0.0, tol=1e-9)


def _e91_threshold_lb(cfg: MissionConfig, noise_rate: float) -> float:
    y0b = noise_rate * cfg.coincidence_window

    def g(x):
        e = e91_qber(cfg.mu_e91, cfg.ogs_arm_transmission, 10 ** x, y0b,
                     cfg.noise_error_prob, cfg.misdetection_prob)
        return e91_key_fraction(float(e), cfg.pp_efficiency)

    return 10 ** bisect(g, -12.0, 0.0, tol=1e-9)


def max_qber(protocol: str, cfg: MissionConfig, noise_rates: Sequence[float] | None = None) -> float:
    """Largest QBER compatible with a positive key.

    For E91 this is a constant of ``f``. For DSP it depends on the loss
    scenario: the QBER at the zero-key transmission is averaged over the
    noise levels in ``noise_rates`` (default: zenith and edge totals).
    """
    if protocol == channel.E91:
        return max_qber_e91(cfg.pp_efficiency)
    if noise_rates is None:
        noise_rates = noise_endpoints(cfg)
    es = []
    for n in noise_rates:
        lb = _dsp_threshold_lb(cfg, n)
        _, e, _, _ = dsp_terms(cfg.mu_dsp, lb, n * cfg.coincidence_window, cfg.noise_error_prob, cfg.misdetection_prob)
        es.append(float(e))
    return float(np.mean(es))


@dataclass(frozen=True)
class LossThreshold:
    protocol: str
    noise_rate: float
    total_db: float
    link_db: float
    bob_arm_db: float
    e_max: float

    def to_dict(self) -> dict:
        return {"protocol": self.protocol, "noise_cps": self.noise_rate, "total_db": self.total_db,
                "link_db": self.link_db, "bob_arm_db": self.bob_arm_db, "e_max": self.e_max}


def max_tolerable_loss(protocol: str, cfg: MissionConfig, noise_rate: float | None = None) -> LossThreshold:
    """Loss at which the secure rate reaches zero.

    ``total_db`` is the full chain (Alice side included for E91) and
    ``link_db`` the corresponding sender-to-receiver-lens budget.
    """
    if noise_rate is None:
        noise_rate = noise_endpoints(cfg)[1]
    y0b = noise_rate * cfg.coincidence_window
    if protocol == channel.E91:
        lb = _e91_threshold_lb(cfg, noise_rate)
        total = lb * cfg.ogs_detector_eff
        e = float(e91_qber(cfg.mu_e91, cfg.ogs_arm_transmission, lb, y0b, cfg.noise_error_prob, cfg.misdetection_prob))
    elif protocol == channel.DSP:
        lb = _dsp_threshold_lb(cfg, noise_rate)
        total = lb
        e = float(dsp_terms(cfg.mu_dsp, lb, y0b, cfg.noise_error_prob, cfg.misdetection_prob)[1])
    else:
        raise ValueError(f"unknown protocol {protocol!r}")
    chain = channel.fixed_chain_linear(protocol, cfg)
    return LossThreshold(protocol, noise_rate, linear_to_db(total), linear_to_db(total / chain), linear_to_db(lb), e)


def noise_endpoints(cfg: MissionConfig) -> tuple[float, float]:
    """Total noise rate at zenith and at the minimum-elevation edge."""
    lo, hi = cfg.background_rate_bounds
    return lo + 2 * cfg.dark_count_rate, hi + 2 * cfg.dark_count_rate


def loss_thresholds(protocol: str, cfg: MissionConfig) -> list[LossThreshold]:
    return [max_tolerable_loss(protocol, cfg, n) for n in noise_endpoints(cfg)]


def write_threshold_json(path: str | Path, reports: Sequence[LossThreshold]) -> None:
    Path(path).write_text(json.dumps([r.to_dict() for r in reports], indent=2, sort_keys=True) + "\n")


# --- optimisation ----------------------------------------------------------

def dsp_window_key(mu: float, lb: np.ndarray, y0b: np.ndarray, cfg: MissionConfig, dt: float = 1.0) -> float:
    """Pass-integrated DSP key (bits) over the whole profile, QBERs averaged."""
    q, e, q1, e1 = dsp_terms(mu, lb, y0b, cfg.noise_error_prob, cfg.misdetection_prob)
    w = np.full(len(q), dt)
    if len(q) > 1:
        w[0] = w[-1] = dt / 2
    sq, sq1 = (w * q).sum(), (w * q1).sum()
    e_bar = (w * q * e).sum() / sq
    e1_bar = (w * q1 * e1).sum() / sq1
    return 0.25 * cfg.dsp_rep_rate * dsp_bracket(sq, e_bar, sq1, e1_bar, cfg.pp_efficiency)


def optimize_mu_dsp(objective: Callable[[float], float], lo: float = 1e-3, hi: float = 2.0, tol: float = 1e-3) -> float:
    """Golden-section maximiser of a pass-integrated key objective over mu."""
    mu = golden_section_max(objective, lo, hi, tol)
    if objective(mu) <= 0:
        raise NoKeyError("no positive key for any mean photon number in range")
    return mu


def default_mu_objective(cfg: MissionConfig, r0: float | None = None, pass_geometry=None) -> Callable[[float], float]:
    """Key for the zenith reference pass at ``r0`` as a function of mu."""
    from .geometry import zenith_pass

    r0 = cfg.fried_zenith if r0 is None else r0
    p = zenith_pass(cfg.orbit_altitude, cfg.min_elevation) if pass_geometry is None else pass_geometry
    lb = channel.bob_arm_transmission(p.zenith, r0, channel.DSP, cfg, p.range)
    y0b = channel.dark_yield(p.zenith, cfg)
    return lambda mu: dsp_window_key(mu, lb, y0b, cfg)


# --- detector trade-off ----------------------------------------------------

@dataclass(frozen=True)
class TradeoffPoint:
    eta_b: float
    t_b: float
    tau: float
    snr: float
    secure_rate: float


def detector_tradeoff_sweep(eta_grid: Sequence[float], tb_grid: Sequence[float], cfg: MissionConfig,
                            r0: float = 0.20, elevation: float = math.radians(60.0)) -> list[TradeoffPoint]:
    """E91 SNR and secure rate over (eta_B, t_B), with tau = 2 sqrt(t_A^2 + t_B^2)."""
    if len(eta_grid) == 0 or len(tb_grid) == 0:
        raise ValueError("grids must be non-empty")
    phi = math.pi / 2 - elevation
    out = []
    for eta in eta_grid:
        c = cfg.replace(sat_detector_eff=float(eta))
        lb = channel.bob_arm_transmission(phi, r0, channel.E91, c)
        noise = channel.total_noise_rate(phi, c)
        for tb in tb_grid:
            tau = 2 * math.hypot(cfg.ogs_jitter, tb)
            r = e91_rates(c.mu_e91, c.ogs_arm_transmission, lb, noise * tau,
                          c.noise_error_prob, c.misdetection_prob, tau, c.pp_efficiency)
            out.append(TradeoffPoint(float(eta), float(tb), tau, r.snr, r.secure_rate))
    return out


def write_tradeoff_csv(path: str | Path, points: Sequence[TradeoffPoint]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["eta_b", "t_b_ps", "tau_ps", "snr", "rsec_bits_s"])
        for p in points:
            w.writerow([f"{p.eta_b:g}", f"{p.t_b * 1e12:g}", f"{p.tau * 1e12:.4f}", f"{p.snr:.6g}", f"{p.secure_rate:.6g}"])
