"""Geometry and Vehicle Motion Models

Vectors and rotations on SO(3), plus the two UAV motion models used by the
simulator:

- the first-order kinematic model p' = u used by the safety filter, and
- the rigid-body quadrotor model driven by an inertial force and a body torque.

Gravity follows the convention m p'' + m G = tau_p with G = (0, 0, -g).
"""

from dataclasses import dataclass, field, replace
from typing import Tuple

import numpy as np
import scipy.linalg
from scipy.spatial.transform import Rotation

from .errors import NonFiniteStateError

# Aliases used in signatures; both are plain float64 numpy arrays.
Vec3 = np.ndarray
RotationMatrix = np.ndarray

G_ACCEL = 9.81
GRAVITY = np.array([0.0, 0.0, -G_ACCEL])

ORTHONORMAL_TOL = 1e-9
ANTISYMMETRY_TOL = 1e-9


@dataclass(frozen=True)
class UavParams:
    """Physical parameters of one UAV."""
    mass: float
    inertia: np.ndarray
    radius: float
    inertia_inv: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        inertia = np.asarray(self.inertia, dtype=float)
        if inertia.shape == (3,):
            inertia = np.diag(inertia)
        inertia = inertia.reshape(3, 3)
        if not self.mass > 0:
            raise ValueError(f"mass must be positive, got {self.mass}")
        if not self.radius > 0:
            raise ValueError(f"bounding radius must be positive, got {self.radius}")
        if not np.allclose(inertia, inertia.T, atol=1e-12):
            raise ValueError("inertia must be symmetric")
        if np.min(np.linalg.eigvalsh(inertia)) <= 0:
            raise ValueError("inertia must be positive definite")
        object.__setattr__(self, "inertia", inertia)
        object.__setattr__(self, "inertia_inv", np.linalg.inv(inertia))


@dataclass(frozen=True)
class UavState:
    """Position, velocity, attitude and body rate of one UAV."""
    position: Vec3
    velocity: Vec3
    attitude: RotationMatrix = field(default_factory=lambda: np.eye(3))
    body_rate: Vec3 = field(default_factory=lambda: np.zeros(3))

    def with_(self, **changes) -> "UavState":
        return replace(self, **changes)

    def is_finite(self) -> bool:
        return bool(
            np.all(np.isfinite(self.position))
            and np.all(np.isfinite(self.velocity))
            and np.all(np.isfinite(self.attitude))
            and np.all(np.isfinite(self.body_rate))
        )


@dataclass(frozen=True)
class UgvState:
    """Landing pad position and velocity of one UGV."""
    position: Vec3
    velocity: Vec3


def vec3(x) -> Vec3:
    """Coerce a length-3 sequence into a float array."""
    v = np.asarray(x, dtype=float).reshape(3)
    return v


def hat(v: Vec3) -> np.ndarray:
    """Skew-symmetric matrix with hat(v) @ u == cross(v, u)."""
    x, y, z = np.asarray(v, dtype=float).reshape(3)
    return np.array([
        [0.0, -z, y],
        [z, 0.0, -x],
        [-y, x, 0.0],
    ])


def vee(M: np.ndarray) -> Vec3:
    """Inverse of hat: extract the vector from an antisymmetric matrix."""
    M = np.asarray(M, dtype=float).reshape(3, 3)
    asym = np.linalg.norm(M + M.T)
    if asym > ANTISYMMETRY_TOL * max(1.0, np.linalg.norm(M)):
        raise ValueError(f"vee expects an antisymmetric matrix, ||M + M^T|| = {asym:.3e}")
    return np.array([M[2, 1], M[0, 2], M[1, 0]])


def is_rotation(R: np.ndarray, tol: float = ORTHONORMAL_TOL) -> bool:
    R = np.asarray(R, dtype=float)
    if R.shape != (3, 3):
        return False
    return bool(
        np.linalg.norm(R.T @ R - np.eye(3)) < tol and abs(np.linalg.det(R) - 1.0) < tol
    )


def reorthonormalize(R: np.ndarray) -> RotationMatrix:
    """Nearest rotation matrix by polar decomposition."""
    u, _ = scipy.linalg.polar(np.asarray(R, dtype=float))
    if np.linalg.det(u) < 0:
        raise NonFiniteStateError("attitude collapsed to a reflection")
    return u


def rot_z(angle: float) -> RotationMatrix:
    return Rotation.from_euler("z", angle).as_matrix()


def euler_angles(R: RotationMatrix) -> Tuple[float, float, float]:
    """(roll, pitch, yaw) of a rotation matrix, ZYX convention. Logging only."""
    yaw, pitch, roll = Rotation.from_matrix(R).as_euler("ZYX")
    return float(roll), float(pitch), float(yaw)


def step_kinematic(p: Vec3, u: Vec3, dt: float) -> Vec3:
    """Explicit Euler step of p' = u."""
    if not dt > 0:
        raise ValueError(f"dt must be positive, got {dt}")
    return np.asarray(p, dtype=float) + np.asarray(u, dtype=float) * dt


def _rigid_body_rates(p, v, R, w, params: UavParams, tau_p, tau_q):
    dp = v
    dv = (tau_p - params.mass * GRAVITY) / params.mass
    dR = R @ hat(w)
    dw = params.inertia_inv @ (tau_q - np.cross(w, params.inertia @ w))
    return dp, dv, dR, dw


def step_full_dynamics(
    s: UavState,
    params: UavParams,
    tau_p: Vec3,
    tau_q: Vec3,
    dt: float,
) -> UavState:
    """One RK4 step of the rigid-body model with inputs held over dt.

    Translational: p'' = (tau_p - m G) / m. Rotational: J w' = tau_q - w x J w,
    R' = R hat(w). The attitude is projected back onto SO(3) after the step.
    """
    if not dt > 0:
        raise ValueError(f"dt must be positive, got {dt}")
    tau_p = np.asarray(tau_p, dtype=float)
    tau_q = np.asarray(tau_q, dtype=float)

    p0, v0, R0, w0 = s.position, s.velocity, s.attitude, s.body_rate
    k1 = _rigid_body_rates(p0, v0, R0, w0, params, tau_p, tau_q)
    h = 0.5 * dt
    k2 = _rigid_body_rates(p0 + h * k1[0], v0 + h * k1[1], R0 + h * k1[2], w0 + h * k1[3],
                           params, tau_p, tau_q)
    k3 = _rigid_body_rates(p0 + h * k2[0], v0 + h * k2[1], R0 + h * k2[2], w0 + h * k2[3],
                           params, tau_p, tau_q)
    k4 = _rigid_body_rates(p0 + dt * k3[0], v0 + dt * k3[1], R0 + dt * k3[2], w0 + dt * k3[3],
                           params, tau_p, tau_q)

    sixth = dt / 6.0
    p1 = p0 + sixth * (k1[0] + 2 * k2[0] + 2 * k3[0] + k4[0])
    v1 = v0 + sixth * (k1[1] + 2 * k2[1] + 2 * k3[1] + k4[1])
    R1 = R0 + sixth * (k1[2] + 2 * k2[2] + 2 * k3[2] + k4[2])
    w1 = w0 + sixth * (k1[3] + 2 * k2[3] + 2 * k3[3] + k4[3])

    if not (np.all(np.isfinite(p1)) and np.all(np.isfinite(v1))
            and np.all(np.isfinite(R1)) and np.all(np.isfinite(w1))):
        raise NonFiniteStateError("rigid-body integration produced a non-finite state")

    return UavState(position=p1, velocity=v1, attitude=reorthonormalize(R1), body_rate=w1)
