"""Mission parameters, configuration loading and decibel helpers.

All values are SI and linear internally. Keys ending in ``_db`` are only
accepted at the file/CLI boundary and converted on load.
"""
from __future__ import annotations

import dataclasses
import hashlib
import json
import math
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Any, Iterable, Mapping


class ConfigError(ValueError):
    """Raised for unknown keys or out-of-range configuration values."""


def db_to_linear(x: float) -> float:
    return 10.0 ** (x / 10.0)


def linear_to_db(p: float) -> float:
    if not p > 0:
        raise ValueError(f"linear power ratio must be > 0, got {p!r}")
    return 10.0 * math.log10(p)


@dataclass(frozen=True)
class Transmission:
    """A power transmission factor in (0, 1]."""

    linear: float

    def __post_init__(self):
        if not (0.0 < self.linear <= 1.0):
            raise ValueError(f"transmission must lie in (0, 1], got {self.linear!r}")

    @classmethod
    def from_db(cls, x: float) -> "Transmission":
        return cls(db_to_linear(x))

    @property
    def db(self) -> float:
        return linear_to_db(self.linear)

    def __mul__(self, other: "Transmission") -> "Transmission":
        if not isinstance(other, Transmission):
            return NotImplemented
        return Transmission(self.linear * other.linear)

    def __float__(self) -> float:
        return self.linear


_PROB = "prob"
_POS = "pos"


def _f(default, kind=_POS, optional=False):
    return field(default=default, metadata={"kind": kind, "optional": optional})


@dataclass(frozen=True)
class MissionConfig:
    """Every fixed mission parameter. Defaults are the baseline design values.

    Angles are radians, times seconds, rates counts per second, lengths metres.
    ``sat_pointing_trans`` and ``basis_switch_trans`` default to ``None``,
    meaning "compute from the pointing / basis-switch models".
    """

    detector_active_area: float = _f(20e-6)
    ogs_aperture: float = _f(0.30)
    sat_aperture: float = _f(0.10)
    noise_error_prob: float = _f(0.5, _PROB)
    misdetection_prob: float = _f(0.02, _PROB)
    pp_efficiency: float = _f(1.1)
    sat_focal_length: float = _f(0.40)
    beacon_rep_rate: float = _f(10e6)
    field_of_view: float = _f(50e-6)
    wavelength: float = _f(810e-9)

    ogs_detector_eff: float = _f(0.70, _PROB)
    sat_detector_eff: float = _f(0.15, _PROB)
    ogs_arm_transmission: float = _f(0.60, _PROB)
    heralding_eff: float = _f(0.85, _PROB)
    ogs_telescope_trans: float = _f(db_to_linear(-1.0), _PROB)
    sat_telescope_trans: float = _f(db_to_linear(-1.5), _PROB)
    sat_optics_trans: float = _f(db_to_linear(-1.0), _PROB)
    sat_pointing_trans: float | None = _f(None, _PROB, optional=True)
    basis_switch_trans: float | None = _f(None, _PROB, optional=True)
    sync_trans: float = _f(db_to_linear(-0.5), _PROB)

    mu_dsp: float = _f(0.64)
    mu_e91: float = _f(0.01)
    fried_zenith: float = _f(0.20)
    ogs_count_rate: float = _f(60e6)
    sat_count_rate: float = _f(3e3)
    sat_max_rate: float = _f(100e3)
    # R_BG at zenith and at the 30 deg elevation edge, after receiver losses
    background_rate_bounds: tuple[float, float] = _f((80.0, 175.0))
    dark_count_rate: float = _f(200.0)
    dsp_signal_rate: float = _f(315e6)
    e91_pair_rate: float = _f(100e6)
    dsp_rep_rate: float = _f(1e9)

    ogs_pointing: float = _f(2.4e-6)
    sat_pointing: float = _f(40e-6)
    ogs_jitter: float = _f(16e-12)
    sat_jitter: float = _f(37e-12)
    coincidence_window: float = _f(80e-12)
    basis_switch_time: float = _f(100e-6)
    tag_resolution: float = _f(10e-12)
    sync_chunk: float = _f(100e-3)
    max_quantum_connection: float = _f(220.0)

    extinction_thickness: float = _f(0.22)
    orbit_altitude: float = _f(500e3)
    min_elevation: float = _f(math.radians(30.0))
    ogs_latitude: float = _f(math.radians(28 + 45 / 60 + 25 / 3600), "angle")
    ogs_longitude: float = _f(-math.radians(17 + 53 / 60 + 33 / 3600), "angle")
    earth_radius: float = _f(6_371_000.0)

    def __post_init__(self):
        for fd in fields(self):
            _check_field(fd, getattr(self, fd.name))
        if self.pp_efficiency < 1.0:
            raise ConfigError(f"pp_efficiency below 1: {self.pp_efficiency}")
        if self.sat_count_rate > self.sat_max_rate:
            raise ConfigError(
                f"sat_count_rate exceeds sat_max_rate ({self.sat_count_rate} > {self.sat_max_rate})"
            )
        lo, hi = self.background_rate_bounds
        if hi < lo:
            raise ConfigError("background_rate_bounds must be (zenith, edge) with edge >= zenith")

    # derived quantities -------------------------------------------------
    @property
    def y0b_zenith(self) -> float:
        return (self.background_rate_bounds[0] + 2 * self.dark_count_rate) * self.coincidence_window

    def replace(self, **changes) -> "MissionConfig":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict[str, Any]:
        d = dataclasses.asdict(self)
        d["background_rate_bounds"] = list(self.background_rate_bounds)
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2)

    def digest(self) -> str:
        return hashlib.sha256(json.dumps(self.to_dict(), sort_keys=True).encode()).hexdigest()[:16]


FIELD_NAMES = frozenset(f.name for f in fields(MissionConfig))


def _check_field(fd: dataclasses.Field, value: Any) -> None:
    kind = fd.metadata.get("kind", _POS)
    if value is None:
        if fd.metadata.get("optional"):
            return
        raise ConfigError(f"{fd.name} may not be null")
    if fd.name == "background_rate_bounds":
        if len(value) != 2 or any(not (v > 0) for v in value):
            raise ConfigError(f"{fd.name} must be two positive rates, got {value!r}")
        return
    if not isinstance(value, (int, float)) or isinstance(value, bool) or not math.isfinite(value):
        raise ConfigError(f"{fd.name} must be a finite number, got {value!r}")
    if kind == _PROB:
        if not (0.0 <= value <= 1.0):
            raise ConfigError(f"{fd.name} out of range [0, 1]: {value}")
    elif kind == _POS:
        if not value > 0:
            raise ConfigError(f"{fd.name} must be > 0: {value}")


def _coerce(key: str, raw: Any) -> tuple[str, Any]:
    if key.endswith("_db"):
        base = key[:-3]
        if base not in FIELD_NAMES:
            raise ConfigError(f"unknown configuration key: {key}")
        return base, db_to_linear(float(raw))
    if key not in FIELD_NAMES:
        raise ConfigError(f"unknown configuration key: {key}")
    if key == "background_rate_bounds":
        return key, tuple(float(v) for v in raw)
    if raw is None:
        return key, None
    return key, float(raw)


def parse_override(text: str) -> tuple[str, Any]:
    """Parse ``key=value`` as given to ``--set``. Values are JSON literals."""
    if "=" not in text:
        raise ConfigError(f"override must be key=value, got {text!r}")
    key, _, val = text.partition("=")
    key = key.strip()
    try:
        value = json.loads(val)
    except json.JSONDecodeError:
        raise ConfigError(f"override value for {key} is not a number: {val!r}") from None
    return key, value


def load_config(
    path: str | Path | None = None,
    overrides: Mapping[str, Any] | Iterable[str] | None = None,
) -> MissionConfig:
    """Build a config from an optional flat JSON file plus overrides.

    Missing keys keep their defaults; overrides are applied last and may be
    a mapping or an iterable of ``key=value`` strings.
    """
    values: dict[str, Any] = {}
    if path is not None:
        p = Path(path)
        if p.exists():
            text = p.read_text().strip()
            data = json.loads(text) if text else {}
            if not isinstance(data, dict):
                raise ConfigError(f"{p}: configuration must be a JSON object")
            for k, v in data.items():
                name, val = _coerce(k, v)
                values[name] = val
    if overrides:
        items = overrides.items() if isinstance(overrides, Mapping) else map(parse_override, overrides)
        for k, v in items:
            name, val = _coerce(k, v)
            values[name] = val
    return MissionConfig(**values)
