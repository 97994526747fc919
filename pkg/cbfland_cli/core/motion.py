"""UGV motion programs.

Each program prescribes the pad velocity v_d(t); the pad position is the
exact time integral of that velocity from the initial position at t0.
"""

from dataclasses import dataclass, field
from enum import Enum
from typing import Tuple

import numpy as np

from .geometry import UgvState, Vec3, vec3


class ProgramKind(str, Enum):
    STATIC = "static"
    SINUSOIDAL = "sinusoidal"
    PIECEWISE = "piecewise"


@dataclass(frozen=True)
class MotionProgram:
    """Velocity program of one UGV.

    sinusoidal: v(t) = offset + amplitude * cos(omega t + phase), componentwise.
    piecewise:  v(t) = velocities[k] on [breakpoints[k], breakpoints[k+1]),
                zero before the first breakpoint.
    """
    kind: ProgramKind
    p0: Vec3
    t0: float = 0.0
    offset: Vec3 = field(default_factory=lambda: np.zeros(3))
    amplitude: Vec3 = field(default_factory=lambda: np.zeros(3))
    omega: float = 0.0
    phase: float = 0.0
    breakpoints: Tuple[float, ...] = ()
    velocities: np.ndarray = field(default_factory=lambda: np.zeros((0, 3)))

    def __post_init__(self):
        object.__setattr__(self, "kind", ProgramKind(self.kind))
        object.__setattr__(self, "p0", vec3(self.p0))
        object.__setattr__(self, "offset", vec3(self.offset))
        object.__setattr__(self, "amplitude", vec3(self.amplitude))
        velocities = np.asarray(self.velocities, dtype=float).reshape(-1, 3)
        object.__setattr__(self, "velocities", velocities)
        object.__setattr__(self, "breakpoints", tuple(float(b) for b in self.breakpoints))
        if len(self.breakpoints) != len(velocities):
            raise ValueError(
                f"{len(self.breakpoints)} breakpoints but {len(velocities)} velocities"
            )
        if any(b1 <= b0 for b0, b1 in zip(self.breakpoints, self.breakpoints[1:])):
            raise ValueError("breakpoints must be strictly increasing")

    @classmethod
    def static(cls, p0) -> "MotionProgram":
        return cls(kind=ProgramKind.STATIC, p0=p0)

    def velocity(self, t: float) -> Vec3:
        if self.kind is ProgramKind.STATIC:
            return np.zeros(3)
        if self.kind is ProgramKind.SINUSOIDAL:
            return self.offset + self.amplitude * np.cos(self.omega * t + self.phase)
        k = self._segment(t)
        return np.zeros(3) if k < 0 else self.velocities[k].copy()

    def position(self, t: float) -> Vec3:
        if t < self.t0:
            raise ValueError(f"t={t} precedes the program start t0={self.t0}")
        if self.kind is ProgramKind.STATIC:
            return self.p0.copy()
        if self.kind is ProgramKind.SINUSOIDAL:
            drift = self.offset * (t - self.t0)
            if self.omega == 0.0:
                return self.p0 + drift + self.amplitude * np.cos(self.phase) * (t - self.t0)
            swing = np.sin(self.omega * t + self.phase) - np.sin(self.omega * self.t0 + self.phase)
            return self.p0 + drift + self.amplitude * swing / self.omega
        return self.p0 + self._piecewise_displacement(t)

    def _segment(self, t: float) -> int:
        return int(np.searchsorted(self.breakpoints, t, side="right")) - 1

    def _piecewise_displacement(self, t: float) -> Vec3:
        bounds = list(self.breakpoints) + [np.inf]
        disp = np.zeros(3)
        for k, v in enumerate(self.velocities):
            start = max(self.t0, bounds[k])
            end = min(t, bounds[k + 1])
            if end > start:
                disp += v * (end - start)
        return disp


def ugv_state_at(program: MotionProgram, t: float) -> UgvState:
    """Pad position and velocity at time t >= program.t0."""
    return UgvState(position=program.position(t), velocity=program.velocity(t))
