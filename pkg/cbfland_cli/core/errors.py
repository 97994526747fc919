"""Exception types raised by the simulation core."""

from typing import List, Optional, Any


class CbfLandError(Exception):
    """Base class for all cbfland errors."""


class NearAxisError(CbfLandError):
    """The LCBF gradient is undefined this close to the descent axis."""

    def __init__(self, distance: float, d_tol: float):
        self.distance = distance
        self.d_tol = d_tol
        super().__init__(
            f"horizontal distance {distance:.3e} m is inside the near-axis guard {d_tol:.1e} m"
        )


class QpInfeasibleError(CbfLandError):
    """No input satisfies every CBF row and the box bound."""

    def __init__(self, reason: str, row: Optional[int] = None, violation: float = float("nan")):
        self.reason = reason
        self.row = row
        self.violation = violation
        detail = f" (most violated row {row}, violation {violation:.3e})" if row is not None else ""
        super().__init__(f"QP infeasible: {reason}{detail}")


class DegenerateThrustError(CbfLandError):
    """Thrust vector too small to define a body z axis."""


class GimbalDegenerateError(CbfLandError):
    """Thrust direction parallel to the yaw reference axis."""


class NonFiniteStateError(CbfLandError):
    """Integration produced NaN or inf."""

    def __init__(self, message: str, uav: Optional[int] = None, tick: Optional[int] = None):
        self.uav = uav
        self.tick = tick
        super().__init__(message)


class SimulationHalted(CbfLandError):
    """A run stopped early; carries the partial log and the offending tick."""

    def __init__(self, cause: CbfLandError, tick: int, time: float, log: Any = None):
        self.cause = cause
        self.tick = tick
        self.time = time
        self.log = log
        super().__init__(f"simulation halted at tick {tick} (t={time:.3f} s): {cause}")


class ScenarioError(CbfLandError):
    """Scenario file could not be read, parsed or validated."""

    def __init__(self, message: str, path: Optional[str] = None, line: Optional[int] = None,
                 issues: Optional[List[str]] = None):
        self.path = path
        self.line = line
        self.issues = issues or []
        location = ""
        if path:
            location = f"{path}:{line}: " if line else f"{path}: "
        super().__init__(f"{location}{message}")
