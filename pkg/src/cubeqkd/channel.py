"""Optical transmission factors, background noise and the total loss chain."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable

import numpy as np

from .config import MissionConfig, Transmission
from .geometry import slant_range

E91 = "E91"
DSP = "DSP"
PROTOCOLS = (E91, DSP)

# waist of the Gaussian matched to the central Airy lobe, as a fraction of D_A
AIRY_WAIST_FRACTION = 0.316


def _check_zenith(phi) -> np.ndarray:
    phi = np.asarray(phi, dtype=float)
    if np.any(phi < 0) or np.any(phi >= math.pi / 2):
        raise ValueError("zenith angle must lie in [0, pi/2)")
    return phi


def _scalar(x):
    x = np.asarray(x)
    return float(x) if x.ndim == 0 else x


@dataclass(frozen=True)
class BeamProfile:
    w_L: float
    w_LP: float
    zenith_angle: float
    fried: float


def beam_waist_turbulent(phi, r0: float, cfg: MissionConfig, L=None):
    """Long-term beam radius at the satellite before OGS pointing error."""
    phi = _check_zenith(phi)
    if not r0 > 0:
        raise ValueError("Fried parameter must be positive")
    if L is None:
        L = slant_range(phi, cfg.orbit_altitude, cfg.earth_radius)
    D = cfg.ogs_aperture
    diffraction = np.asarray(L) * cfg.wavelength / (AIRY_WAIST_FRACTION * D * math.pi)
    turbulence = (1 + 0.83 / np.cos(phi) * (D / r0) ** (5 / 3)) ** (3 / 5)
    return _scalar(diffraction * turbulence)


def effective_waist(w_L, sigma_A: float, L):
    return _scalar(np.sqrt(np.asarray(w_L) ** 2 + (sigma_A * np.asarray(L)) ** 2))


def beam_profile(phi: float, r0: float, cfg: MissionConfig) -> BeamProfile:
    L = slant_range(phi, cfg.orbit_altitude, cfg.earth_radius)
    wl = beam_waist_turbulent(phi, r0, cfg, L)
    return BeamProfile(wl, effective_waist(wl, cfg.ogs_pointing, L), phi, r0)


def atmospheric_transmission(phi, beta: float):
    phi = _check_zenith(phi)
    return _scalar(np.exp(-beta / np.cos(phi)))


def geometric_capture(D_B: float, w_LP):
    return _scalar(-np.expm1(-0.5 * (D_B / np.asarray(w_LP)) ** 2))


def link_transmission(phi, r0: float, cfg: MissionConfig, L=None):
    """Sender-lens to receiver-lens transmission Lambda_L (linear)."""
    phi = _check_zenith(phi)
    if L is None:
        L = slant_range(phi, cfg.orbit_altitude, cfg.earth_radius)
    wl = beam_waist_turbulent(phi, r0, cfg, L)
    wlp = effective_waist(wl, cfg.ogs_pointing, L)
    return _scalar(geometric_capture(cfg.sat_aperture, wlp) * atmospheric_transmission(phi, cfg.extinction_thickness))


def pointing_transmission(fov: float, sigma_B: float, wavelength: float, D_B: float) -> Transmission:
    spot = (2 * wavelength / (math.pi * D_B)) ** 2 + sigma_B**2
    return Transmission(-math.expm1(-0.5 * fov**2 / spot))


def basis_switch_transmission(R_B: float, t_SB: float) -> Transmission:
    """Fraction of detections kept when only the first click per basis setting counts."""
    if R_B <= 0 or t_SB <= 0:
        raise ValueError("count rate and switching time must be positive")
    x = R_B * t_SB
    if x < 1e-6:
        return Transmission(1 - x / 2 + x * x / 6)
    return Transmission(-math.expm1(-x) / x)


def sat_pointing(cfg: MissionConfig) -> Transmission:
    if cfg.sat_pointing_trans is not None:
        return Transmission(cfg.sat_pointing_trans)
    return pointing_transmission(cfg.field_of_view, cfg.sat_pointing, cfg.wavelength, cfg.sat_aperture)


def basis_switch(cfg: MissionConfig) -> Transmission:
    if cfg.basis_switch_trans is not None:
        return Transmission(cfg.basis_switch_trans)
    return basis_switch_transmission(cfg.sat_count_rate, cfg.basis_switch_time)


# --- noise ---------------------------------------------------------------

def background_rate(phi, cfg: MissionConfig):
    """Stray-light counts R_BG after all receiver losses (cps).

    Linear in sec(phi) between the zenith value and the value at the
    minimum-elevation edge.
    """
    phi = _check_zenith(phi)
    edge = math.pi / 2 - cfg.min_elevation
    if np.any(phi > edge + 1e-9):
        raise ValueError("zenith angle beyond the minimum-elevation edge")
    lo, hi = cfg.background_rate_bounds
    s = 1 / np.cos(phi)
    s_edge = 1 / math.cos(edge)
    frac = (s - 1) / (s_edge - 1) if s_edge > 1 else np.zeros_like(s)
    return _scalar(lo + (hi - lo) * np.clip(frac, 0.0, 1.0))


def total_noise_rate(phi, cfg: MissionConfig):
    """R_B+D = R_BG + 2 R_DC, the satellite's summed noise count rate."""
    return _scalar(np.asarray(background_rate(phi, cfg)) + 2 * cfg.dark_count_rate)


def dark_yield(phi, cfg: MissionConfig, tau: float | None = None):
    tau = cfg.coincidence_window if tau is None else tau
    return _scalar(np.asarray(total_noise_rate(phi, cfg)) * tau)


@dataclass(frozen=True)
class NoiseModel:
    background: float
    dark_per_detector: float
    total: float
    dark_yield: float


def noise_model(phi: float, cfg: MissionConfig) -> NoiseModel:
    bg = background_rate(phi, cfg)
    tot = bg + 2 * cfg.dark_count_rate
    return NoiseModel(bg, cfg.dark_count_rate, tot, tot * cfg.coincidence_window)


# --- loss chain ----------------------------------------------------------

@dataclass(frozen=True)
class LossBreakdown:
    """Per-factor transmissions. Alice-side factors are 1 for DSP."""

    protocol: str
    geometric: Transmission
    atmosphere: Transmission
    link: Transmission
    pointing: Transmission
    sat_telescope: Transmission
    sat_optics: Transmission
    basis_switch: Transmission
    sync: Transmission
    sat_detector: Transmission
    ogs_detector: Transmission
    heralding_sq: Transmission
    ogs_telescope: Transmission

    def factors(self) -> dict[str, Transmission]:
        return {
            "ogs_detector": self.ogs_detector,
            "heralding_sq": self.heralding_sq,
            "ogs_telescope": self.ogs_telescope,
            "link": self.link,
            "pointing": self.pointing,
            "sat_telescope": self.sat_telescope,
            "sat_optics": self.sat_optics,
            "basis_switch": self.basis_switch,
            "sync": self.sync,
            "sat_detector": self.sat_detector,
        }

    @property
    def total(self) -> Transmission:
        out = Transmission(1.0)
        for t in self.factors().values():
            out = out * t
        return out

    @property
    def satellite(self) -> Transmission:
        """Lambda_B: link plus every satellite-side factor."""
        return (self.link * self.pointing * self.sat_telescope * self.sat_optics
                * self.basis_switch * self.sync * self.sat_detector)

    @property
    def bob_arm(self) -> Transmission:
        """Transmission of the photon sent to the satellite, for the rate models.

        For E91 this is the whole chain except Alice's detector efficiency
        (heralding and sending telescope act on the up-going photon); for
        DSP it equals the satellite-side product.
        """
        return self.total if self.protocol == DSP else Transmission(self.total.linear / self.ogs_detector.linear)


def fixed_chain(protocol: str, cfg: MissionConfig) -> dict[str, Transmission]:
    """All loss factors except the link itself."""
    one = Transmission(1.0)
    e91 = protocol == E91
    if protocol not in PROTOCOLS:
        raise ValueError(f"unknown protocol {protocol!r}")
    return {
        "ogs_detector": Transmission(cfg.ogs_detector_eff) if e91 else one,
        "heralding_sq": Transmission(cfg.heralding_eff**2) if e91 else one,
        "ogs_telescope": Transmission(cfg.ogs_telescope_trans) if e91 else one,
        "pointing": sat_pointing(cfg),
        "sat_telescope": Transmission(cfg.sat_telescope_trans),
        "sat_optics": Transmission(cfg.sat_optics_trans),
        "basis_switch": basis_switch(cfg),
        "sync": Transmission(cfg.sync_trans),
        "sat_detector": Transmission(cfg.sat_detector_eff),
    }


def fixed_chain_linear(protocol: str, cfg: MissionConfig, include_ogs_detector: bool = True) -> float:
    ch = fixed_chain(protocol, cfg)
    if not include_ogs_detector:
        ch.pop("ogs_detector")
    return math.prod(t.linear for t in ch.values())


def total_transmission(phi: float, r0: float, protocol: str, cfg: MissionConfig, L: float | None = None) -> LossBreakdown:
    if L is None:
        L = slant_range(phi, cfg.orbit_altitude, cfg.earth_radius)
    wl = beam_waist_turbulent(phi, r0, cfg, L)
    wlp = effective_waist(wl, cfg.ogs_pointing, L)
    geo = Transmission(geometric_capture(cfg.sat_aperture, wlp))
    atm = Transmission(atmospheric_transmission(phi, cfg.extinction_thickness))
    ch = fixed_chain(protocol, cfg)
    return LossBreakdown(protocol=protocol, geometric=geo, atmosphere=atm, link=geo * atm, **ch)


def bob_arm_transmission(phi, r0: float, protocol: str, cfg: MissionConfig, L=None):
    """Vectorised ``total_transmission(...).bob_arm`` (linear)."""
    link = np.asarray(link_transmission(phi, r0, cfg, L))
    return _scalar(link * fixed_chain_linear(protocol, cfg, include_ogs_detector=False))


def write_loss_curves(path: str | Path, cfg: MissionConfig, protocol: str,
                      r0_values: Iterable[float], zenith_deg: Iterable[float]) -> None:
    r0_values = list(r0_values)
    zenith_deg = list(zenith_deg)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["r0_m", "zenith_deg", "lambda_L_db", "lambda_total_db"])
        for r0 in r0_values:
            for z in zenith_deg:
                b = total_transmission(math.radians(z), r0, protocol, cfg)
                w.writerow([f"{r0:g}", f"{z:g}", f"{b.link.db:.6f}", f"{b.total.db:.6f}"])
