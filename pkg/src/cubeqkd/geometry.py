"""Circular-orbit propagation, ground-station visibility and pass statistics.

Two-body circular motion on a spherical Earth. Sun-synchronous orbits get
the fixed nodal precession rate; no other perturbation is modelled.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from datetime import datetime, timedelta, timezone
from pathlib import Path
from typing import Sequence

import numpy as np

EARTH_RADIUS = 6_371_000.0
MU_EARTH = 3.986004418e14
EARTH_ROTATION = 7.2921150e-5  # rad/s, sidereal
SSO_NODAL_RATE = math.radians(0.9856) / 86400.0
NIGHT_SUN_ELEVATION = math.radians(-12.0)
J2000 = datetime(2000, 1, 1, 12, tzinfo=timezone.utc)


def slant_range(zenith_angle, altitude: float, earth_radius: float = EARTH_RADIUS):
    """Ground-station to satellite distance for a spherical Earth."""
    phi = np.asarray(zenith_angle, dtype=float)
    if np.any(phi < 0) or np.any(phi >= math.pi / 2):
        raise ValueError("zenith angle must lie in [0, pi/2)")
    c = np.cos(phi)
    out = np.sqrt(earth_radius**2 * c * c + 2 * earth_radius * altitude + altitude**2) - earth_radius * c
    return float(out) if out.ndim == 0 else out


def orbital_period(altitude: float, earth_radius: float = EARTH_RADIUS) -> float:
    a = earth_radius + altitude
    return 2 * math.pi * math.sqrt(a**3 / MU_EARTH)


def sso_inclination(altitude: float, earth_radius: float = EARTH_RADIUS) -> float:
    """Inclination giving the sun-synchronous nodal rate under J2."""
    j2 = 1.08263e-3
    re_eq = 6_378_137.0
    a = earth_radius + altitude
    n = math.sqrt(MU_EARTH / a**3)
    cos_i = -SSO_NODAL_RATE / (1.5 * n * j2 * (re_eq / a) ** 2)
    return math.acos(cos_i)


@dataclass(frozen=True)
class OrbitSpec:
    altitude: float
    inclination: float
    raan: float = 0.0
    epoch: datetime = datetime(2020, 6, 1, tzinfo=timezone.utc)
    kind: str = "circular"
    arg_latitude: float = 0.0  # at epoch
    earth_radius: float = EARTH_RADIUS

    def __post_init__(self):
        if not (400e3 <= self.altitude <= 700e3):
            raise ValueError(f"altitude must be within 400-700 km, got {self.altitude / 1e3:.1f} km")
        if not (0.0 <= self.inclination <= math.pi):
            raise ValueError("inclination must be in [0, pi]")
        if self.kind not in ("circular", "sun-synchronous"):
            raise ValueError(f"unknown orbit kind {self.kind!r}")
        if self.epoch.tzinfo is None:
            raise ValueError("epoch must be timezone-aware (UTC)")

    @property
    def radius(self) -> float:
        return self.earth_radius + self.altitude

    @property
    def mean_motion(self) -> float:
        return math.sqrt(MU_EARTH / self.radius**3)

    @property
    def period(self) -> float:
        return 2 * math.pi / self.mean_motion

    def eci(self, t) -> np.ndarray:
        """Inertial position(s) at ``t`` seconds after epoch, shape (..., 3)."""
        t = np.asarray(t, dtype=float)
        u = self.arg_latitude + self.mean_motion * t
        raan = self.raan + (SSO_NODAL_RATE * t if self.kind == "sun-synchronous" else 0.0)
        ci, si = math.cos(self.inclination), math.sin(self.inclination)
        cu, su = np.cos(u), np.sin(u)
        co, so = np.cos(raan), np.sin(raan)
        x = co * cu - so * su * ci
        y = so * cu + co * su * ci
        z = su * si
        return self.radius * np.stack([x, y, z], axis=-1)

    def ecef(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        return eci_to_ecef(self.eci(t), gmst(self.epoch, t))


def _days_since_j2000(epoch: datetime, t) -> np.ndarray:
    return (epoch - J2000).total_seconds() / 86400.0 + np.asarray(t, dtype=float) / 86400.0


def gmst(epoch: datetime, t) -> np.ndarray:
    """Greenwich mean sidereal angle (rad), UT1 taken equal to UTC."""
    d = _days_since_j2000(epoch, t)
    theta = math.radians(280.46061837) + math.radians(360.98564736629) * d
    return np.mod(theta, 2 * math.pi)


def eci_to_ecef(r: np.ndarray, theta) -> np.ndarray:
    c, s = np.cos(theta), np.sin(theta)
    x = c * r[..., 0] + s * r[..., 1]
    y = -s * r[..., 0] + c * r[..., 1]
    return np.stack([x, y, r[..., 2]], axis=-1)


def sun_direction_eci(epoch: datetime, t) -> np.ndarray:
    """Unit vector to the Sun, low-precision almanac series (~0.01 deg)."""
    n = _days_since_j2000(epoch, t)
    L = np.radians(280.460 + 0.9856474 * n)
    g = np.radians(357.528 + 0.9856003 * n)
    lam = L + np.radians(1.915) * np.sin(g) + np.radians(0.020) * np.sin(2 * g)
    eps = np.radians(23.439 - 4e-7 * n)
    return np.stack([np.cos(lam), np.cos(eps) * np.sin(lam), np.sin(eps) * np.sin(lam)], axis=-1)


@dataclass(frozen=True)
class GroundStation:
    latitude: float
    longitude: float
    earth_radius: float = EARTH_RADIUS

    @property
    def up(self) -> np.ndarray:
        cl = math.cos(self.latitude)
        return np.array([cl * math.cos(self.longitude), cl * math.sin(self.longitude), math.sin(self.latitude)])

    @property
    def ecef(self) -> np.ndarray:
        return self.earth_radius * self.up


LA_PALMA = GroundStation(math.radians(28 + 45 / 60 + 25 / 3600), -math.radians(17 + 53 / 60 + 33 / 3600))


@dataclass(frozen=True)
class PositionSeries:
    """Satellite positions sampled at ``times`` seconds after ``orbit.epoch``."""

    orbit: OrbitSpec
    times: np.ndarray
    eci: np.ndarray
    ecef: np.ndarray

    def __len__(self):
        return len(self.times)


def propagate(orbit: OrbitSpec, start: datetime, end: datetime, step: float) -> PositionSeries:
    if step <= 0:
        raise ValueError("step must be positive")
    if end <= start:
        raise ValueError("end must be after start")
    t0 = (start - orbit.epoch).total_seconds()
    t1 = (end - orbit.epoch).total_seconds()
    n = int(math.floor((t1 - t0) / step)) + 1
    times = t0 + step * np.arange(n)
    eci = orbit.eci(times)
    return PositionSeries(orbit, times, eci, eci_to_ecef(eci, gmst(orbit.epoch, times)))


@dataclass(frozen=True)
class LookAngles:
    elevation: np.ndarray
    zenith: np.ndarray
    range: np.ndarray
    ogs_night: np.ndarray
    sat_eclipsed: np.ndarray


def look_angles(orbit: OrbitSpec, t, ogs: GroundStation) -> LookAngles:
    t = np.atleast_1d(np.asarray(t, dtype=float))
    eci = orbit.eci(t)
    theta = gmst(orbit.epoch, t)
    ecef = eci_to_ecef(eci, theta)
    rel = ecef - ogs.ecef
    rng = np.linalg.norm(rel, axis=-1)
    up = ogs.up
    sin_el = np.clip(rel @ up / rng, -1.0, 1.0)
    el = np.arcsin(sin_el)

    sun = sun_direction_eci(orbit.epoch, t)
    sun_ecef = eci_to_ecef(sun, theta)
    sun_el = np.arcsin(np.clip(sun_ecef @ up, -1.0, 1.0))
    along = np.einsum("ij,ij->i", eci, sun)
    perp = np.linalg.norm(eci - along[:, None] * sun, axis=-1)
    eclipsed = (along < 0) & (perp < orbit.earth_radius)
    return LookAngles(el, math.pi / 2 - el, rng, sun_el < NIGHT_SUN_ELEVATION, eclipsed)


@dataclass(frozen=True)
class PassSample:
    time: datetime
    zenith_angle: float
    slant_range: float
    ogs_night: bool
    sat_eclipsed: bool


@dataclass(frozen=True)
class PassGeometry:
    """One contiguous visibility interval, sampled on a regular grid."""

    t: np.ndarray  # seconds after epoch
    zenith: np.ndarray
    range: np.ndarray
    ogs_night: np.ndarray
    sat_eclipsed: np.ndarray
    epoch: datetime = J2000

    def __post_init__(self):
        if len(self.t) and np.any(np.diff(self.t) <= 0):
            raise ValueError("pass samples must be strictly time-ordered")

    @property
    def duration(self) -> float:
        return float(self.t[-1] - self.t[0]) if len(self.t) else 0.0

    @property
    def max_elevation(self) -> float:
        return float(math.pi / 2 - self.zenith.min())

    @property
    def start(self) -> datetime:
        return self.epoch + timedelta(seconds=float(self.t[0]))

    @property
    def end(self) -> datetime:
        return self.epoch + timedelta(seconds=float(self.t[-1]))

    @property
    def samples(self) -> list[PassSample]:
        return [
            PassSample(self.epoch + timedelta(seconds=float(t)), float(z), float(r), bool(n), bool(e))
            for t, z, r, n, e in zip(self.t, self.zenith, self.range, self.ogs_night, self.sat_eclipsed)
        ]

    def __len__(self):
        return len(self.t)


def zenith_pass(
    altitude: float = 500e3,
    min_elevation: float = math.radians(30.0),
    step: float = 1.0,
    earth_radius: float = EARTH_RADIUS,
) -> PassGeometry:
    """Pass straight through zenith with Earth rotation ignored.

    This is the "0 deg inclination with respect to the station" reference
    pass used for the per-pass key curves.
    """
    a = earth_radius + altitude
    n = math.sqrt(MU_EARTH / a**3)
    # central angle where elevation reaches the minimum
    zmax = math.pi / 2 - min_elevation
    theta_max = zmax - math.asin(earth_radius * math.sin(zmax) / a)
    half = theta_max / n
    k = int(math.floor(half / step))
    t = step * np.arange(-k, k + 1)
    th = n * t
    x = a * np.sin(th)
    z = a * np.cos(th) - earth_radius
    zen = np.arctan2(np.abs(x), z)
    rng = np.hypot(x, z)
    ones = np.ones(len(t), dtype=bool)
    return PassGeometry(t, zen, rng, ones, ones)


@dataclass
class PassCatalog:
    passes: list[PassGeometry] = field(default_factory=list)

    @property
    def pass_count(self) -> int:
        return len(self.passes)

    @property
    def total_link_time(self) -> float:
        return float(sum(p.duration for p in self.passes))

    @property
    def mean_pass_duration(self) -> float:
        return self.total_link_time / self.pass_count if self.passes else 0.0

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["start", "end", "max_elevation_deg", "duration_s"])
            for p in self.passes:
                w.writerow([p.start.isoformat(), p.end.isoformat(), f"{math.degrees(p.max_elevation):.4f}", f"{p.duration:.1f}"])

    def samples_to_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["pass", "time", "zenith_deg", "range_km", "ogs_night", "sat_eclipsed"])
            for i, p in enumerate(self.passes):
                for s in p.samples:
                    w.writerow([i, s.time.isoformat(), f"{math.degrees(s.zenith_angle):.4f}",
                                f"{s.slant_range / 1e3:.3f}", int(s.ogs_night), int(s.sat_eclipsed)])


def _usable(la: LookAngles, min_elevation, require_night, require_sat_eclipse) -> np.ndarray:
    ok = la.elevation >= min_elevation
    if require_night:
        ok &= la.ogs_night
    if require_sat_eclipse:
        ok &= la.sat_eclipsed
    return ok


def _refine_edge(orbit, ogs, t_in, t_out, pred, tol=1.0):
    """Bisect between a usable and an unusable time; returns the usable side."""
    while abs(t_out - t_in) > tol:
        mid = 0.5 * (t_in + t_out)
        if pred(mid):
            t_in = mid
        else:
            t_out = mid
    return t_in


def find_passes(
    positions: PositionSeries,
    ogs: GroundStation,
    min_elevation: float = math.radians(30.0),
    require_night: bool = True,
    require_sat_eclipse: bool = False,
    sample_step: float = 1.0,
) -> PassCatalog:
    """Extract contiguous usable intervals and resample them at ``sample_step``."""
    if len(positions) == 0:
        return PassCatalog()
    orbit = positions.orbit
    times = positions.times
    la = look_angles(orbit, times, ogs)
    ok = _usable(la, min_elevation, require_night, require_sat_eclipse)
    if not ok.any():
        return PassCatalog()

    def pred(t):
        return bool(_usable(look_angles(orbit, t, ogs), min_elevation, require_night, require_sat_eclipse)[0])

    edges = np.diff(ok.astype(np.int8))
    starts = list(np.flatnonzero(edges == 1) + 1)
    stops = list(np.flatnonzero(edges == -1))
    if ok[0]:
        starts.insert(0, 0)
    if ok[-1]:
        stops.append(len(ok) - 1)

    passes = []
    for i0, i1 in zip(starts, stops):
        t_a = times[i0] if i0 == 0 else _refine_edge(orbit, ogs, times[i0], times[i0 - 1], pred)
        t_b = times[i1] if i1 == len(ok) - 1 else _refine_edge(orbit, ogs, times[i1], times[i1 + 1], pred)
        n = int(math.floor((t_b - t_a) / sample_step))
        t = t_a + sample_step * np.arange(n + 1)
        fine = look_angles(orbit, t, ogs)
        keep = _usable(fine, min_elevation, require_night, require_sat_eclipse)
        t = t[keep]
        if len(t) < 2:
            continue
        passes.append(PassGeometry(
            t, fine.zenith[keep], fine.range[keep], fine.ogs_night[keep], fine.sat_eclipsed[keep], orbit.epoch
        ))
    return PassCatalog(passes)


# ascending node near 13:30 local time at the June 2020 epoch
SSO_RAAN = math.radians(90.0)


def circular_orbit(inclination_deg: float, altitude: float = 500e3, **kw) -> OrbitSpec:
    return OrbitSpec(altitude, math.radians(inclination_deg), **kw)


def sun_synchronous_orbit(altitude: float = 500e3, raan: float = SSO_RAAN, **kw) -> OrbitSpec:
    return OrbitSpec(altitude, sso_inclination(altitude), raan=raan, kind="sun-synchronous", **kw)


def year_catalog(
    orbit: OrbitSpec,
    ogs: GroundStation = LA_PALMA,
    days: float = 365.0,
    step: float = 30.0,
    min_elevation: float = math.radians(30.0),
    require_night: bool = True,
    require_sat_eclipse: bool = False,
) -> PassCatalog:
    pos = propagate(orbit, orbit.epoch, orbit.epoch + timedelta(days=days), step)
    return find_passes(pos, ogs, min_elevation, require_night, require_sat_eclipse)


def link_time_vs_inclination(
    inclinations: Sequence[float],
    altitude: float = 500e3,
    ogs: GroundStation = LA_PALMA,
    epoch: datetime = datetime(2020, 6, 1, tzinfo=timezone.utc),
    days: float = 365.0,
    step: float = 30.0,
    **kw,
) -> list[tuple[float, float]]:
    if len(inclinations) == 0:
        raise ValueError("need at least one inclination")
    out = []
    for inc in inclinations:
        orbit = OrbitSpec(altitude, inc, epoch=epoch)
        cat = year_catalog(orbit, ogs, days, step, **kw)
        out.append((float(inc), cat.total_link_time))
    return out
