"""Nominal and Inner-Loop Controllers

Position tracking produces the nominal velocity u' that the safety filter
corrects; velocity tracking turns the filtered u* into an inertial force
tau_p; the geometric attitude controller on SO(3) aligns the body z axis
with tau_p.
"""

from dataclasses import dataclass, field
from enum import Enum
from typing import Optional, Union

import numpy as np
from scipy.spatial.transform import Rotation

from ..logs.logger import get_logger
from .errors import DegenerateThrustError, GimbalDegenerateError
from .geometry import GRAVITY, RotationMatrix, UavParams, UavState, Vec3, hat, vee

logger = get_logger(__name__)

F_MIN = 1e-6
GIMBAL_TOL = 1e-6

Gain = Union[float, np.ndarray]


class ThrustModel(str, Enum):
    """How the inertial force command reaches the translational dynamics."""
    VECTOR = "vector"
    BODY_Z = "body_z"


@dataclass(frozen=True)
class GainSet:
    """Diagonal position/velocity gains for all UAVs and attitude gains per UAV."""
    kp: np.ndarray
    kv: np.ndarray
    k1: np.ndarray
    k2: np.ndarray

    def __post_init__(self):
        for name in ("kp", "kv", "k1", "k2"):
            value = np.asarray(getattr(self, name), dtype=float)
            diag = np.diag(value) if value.ndim == 2 else value
            if np.any(diag <= 0):
                raise ValueError(f"gain {name} must have positive diagonal entries")
            object.__setattr__(self, name, value)

    @classmethod
    def uniform(cls, n_uavs: int, kp: float, kv: float, k1: float, k2: float) -> "GainSet":
        return cls(
            kp=np.full(3 * n_uavs, float(kp)),
            kv=np.full(3 * n_uavs, float(kv)),
            k1=float(k1) * np.eye(3),
            k2=float(k2) * np.eye(3),
        )


@dataclass(frozen=True)
class AttitudeSetpoint:
    R_d: RotationMatrix
    w_d: Vec3 = field(default_factory=lambda: np.zeros(3))
    dw_d: Vec3 = field(default_factory=lambda: np.zeros(3))
    psi_d: float = 0.0


def _apply(K: Gain, x: np.ndarray) -> np.ndarray:
    K = np.asarray(K, dtype=float)
    return K @ x if K.ndim == 2 else K * x


def nominal_position_control(p: np.ndarray, p_d: np.ndarray, v_d: np.ndarray, Kp: Gain) -> np.ndarray:
    """u' = Kp (p_d - p) + v_d, stacked over all UAVs."""
    p, p_d, v_d = (np.asarray(a, dtype=float) for a in (p, p_d, v_d))
    if not p.shape == p_d.shape == v_d.shape:
        raise ValueError(f"shape mismatch: p {p.shape}, p_d {p_d.shape}, v_d {v_d.shape}")
    return _apply(Kp, p_d - p) + v_d


def velocity_tracking_control(
    u_star: np.ndarray,
    v: np.ndarray,
    Kv: Gain,
    masses,
    accel: Optional[np.ndarray] = None,
) -> np.ndarray:
    """tau_p = Kv (u* - v) + M G, stacked over all UAVs.

    ``accel`` is an optional commanded acceleration added as M accel.
    """
    u_star = np.asarray(u_star, dtype=float)
    v = np.asarray(v, dtype=float)
    masses = np.atleast_1d(np.asarray(masses, dtype=float))
    if u_star.shape != v.shape or u_star.size != 3 * masses.size:
        raise ValueError(
            f"shape mismatch: u* {u_star.shape}, v {v.shape}, {masses.size} masses"
        )
    gravity = np.repeat(masses, 3) * np.tile(GRAVITY, masses.size)
    tau_p = _apply(Kv, u_star - v) + gravity
    if accel is not None:
        accel = np.asarray(accel, dtype=float)
        if accel.shape != u_star.shape:
            raise ValueError(f"shape mismatch: accel {accel.shape}, u* {u_star.shape}")
        tau_p = tau_p + np.repeat(masses, 3) * accel
    return tau_p


def body_force_map(tau_p: Vec3, R: RotationMatrix) -> Vec3:
    """Body-frame force F with tau_p = R F."""
    return np.asarray(R, dtype=float).T @ np.asarray(tau_p, dtype=float)


def applied_force(tau_p: Vec3, R: RotationMatrix, model: ThrustModel = ThrustModel.VECTOR) -> Vec3:
    """Inertial force entering the translational dynamics."""
    F = body_force_map(tau_p, R)
    if ThrustModel(model) is ThrustModel.VECTOR:
        return R @ F
    return R[:, 2] * F[2]


def desired_attitude(tau_p: Vec3, psi_d: float) -> RotationMatrix:
    """Rotation whose z axis is along tau_p, with heading psi_d.

    Raises:
        DegenerateThrustError: ||tau_p|| <= F_MIN.
        GimbalDegenerateError: tau_p parallel to the yaw reference axis.
    """
    tau_p = np.asarray(tau_p, dtype=float)
    norm = np.linalg.norm(tau_p)
    if norm <= F_MIN:
        raise DegenerateThrustError(f"thrust magnitude {norm:.3e} N is below {F_MIN:.0e} N")
    z_b = tau_p / norm
    y_a = np.array([-np.sin(psi_d), np.cos(psi_d), 0.0])
    x_b = np.cross(y_a, z_b)
    x_norm = np.linalg.norm(x_b)
    if x_norm < GIMBAL_TOL:
        raise GimbalDegenerateError(f"thrust direction {z_b} is parallel to the heading axis")
    x_b /= x_norm
    y_b = np.cross(z_b, x_b)
    return np.column_stack([x_b, y_b, z_b])


def attitude_error(R: RotationMatrix, R_d: RotationMatrix) -> Vec3:
    """e_q = 1/2 vee(R^T R_d - R_d^T R)."""
    M = R.T @ R_d
    return 0.5 * vee(M - M.T)


def attitude_control(
    s: UavState,
    sp: AttitudeSetpoint,
    params: UavParams,
    K1: Gain,
    K2: Gain,
) -> Vec3:
    """Body torque tau_q of the geometric attitude law.

    The error dynamics close as J e'' = -K1 e - K2 e' when the body rate
    derivative follows J w' = tau_q - w x J w.
    """
    R, w = s.attitude, s.body_rate
    J = params.inertia
    RtRd = R.T @ sp.R_d
    e_q = attitude_error(R, sp.R_d)
    de_q = RtRd @ sp.w_d - w
    feedforward = J @ (RtRd @ sp.dw_d - hat(w) @ RtRd @ sp.w_d)
    return _apply(K1, e_q) + _apply(K2, de_q) + feedforward + np.cross(w, J @ w)


class AttitudeReference:
    """Desired attitude of one UAV across outer ticks.

    w_d and dw_d are first-order differences of consecutive desired rotations
    at the outer rate, zero until enough history exists. A degenerate thrust
    command holds the previous desired attitude.
    """

    def __init__(self, psi_d: float, initial: RotationMatrix):
        self.psi_d = psi_d
        self._R_d = np.asarray(initial, dtype=float)
        self._w_d = np.zeros(3)
        self._ticks = 0

    @property
    def current(self) -> AttitudeSetpoint:
        return AttitudeSetpoint(R_d=self._R_d, w_d=self._w_d, dw_d=np.zeros(3), psi_d=self.psi_d)

    def update(self, tau_p: Vec3, dt: float, uav: Optional[int] = None) -> AttitudeSetpoint:
        try:
            R_d = desired_attitude(tau_p, self.psi_d)
        except DegenerateThrustError:
            logger.debug("degenerate_thrust_hold", uav=uav)
            R_d = self._R_d

        self._ticks += 1
        if self._ticks == 1:
            self._R_d = R_d
            return AttitudeSetpoint(R_d=R_d, psi_d=self.psi_d)

        w_d = Rotation.from_matrix(self._R_d.T @ R_d).as_rotvec() / dt
        dw_d = (w_d - self._w_d) / dt if self._ticks > 2 else np.zeros(3)
        self._R_d, self._w_d = R_d, w_d
        return AttitudeSetpoint(R_d=R_d, w_d=w_d, dw_d=dw_d, psi_d=self.psi_d)
