"""Wheel-encoder odometry."""

from __future__ import annotations

from dataclasses import dataclass

from .errors import ConfigError


@dataclass(frozen=True)
class WheelSpec:
    circumference: float = 0.35
    pulses_per_rev: int = 1000

    def __post_init__(self):
        if not self.circumference > 0:
            raise ConfigError(f"wheel circumference must be positive, got {self.circumference}")
        if self.pulses_per_rev < 1:
            raise ConfigError(f"pulses_per_rev must be >= 1, got {self.pulses_per_rev}")

    @property
    def meters_per_tick(self) -> float:
        return self.circumference / self.pulses_per_rev


def encoder_ticks(axial_position: float, wheel: WheelSpec) -> int:
    """Cumulative encoder count after travelling ``axial_position`` meters."""
    return int(round(axial_position / wheel.circumference * wheel.pulses_per_rev))


def advance_odometry(ticks_delta: int, wheel: WheelSpec) -> float:
    """Axial displacement in meters for ``ticks_delta`` encoder pulses."""
    if ticks_delta < 0:
        raise ValueError(f"ticks_delta must be >= 0, got {ticks_delta}")
    return ticks_delta / wheel.pulses_per_rev * wheel.circumference


def ring_spacing(speed_m_per_min: float, fps: float) -> float:
    """Axial distance between consecutive rings at a constant traverse speed."""
    return speed_m_per_min / 60.0 / fps
