"""Feasibility toolkit for a quantum-communication uplink to a 3U CubeSat."""

__version__ = "0.1.0"

from .config import MissionConfig, Transmission, load_config  # noqa: E402,F401
