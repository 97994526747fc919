"""Landing and Spherical Control Barrier Functions

Closed-form values, position gradients and explicit time partials of

- the landing barrier (LCBF) between a UAV and its landing pad,
      h_l = e_z - beta * alpha * d * exp(-alpha * d),   e = p - p_d,  d = |e_xy|
- the spherical barrier (SCBF) between two UAVs,
      h_s = |p_i - p_j|^2 - (s_i + s_j)^2.

The class-K function applied by the safety filter is linear, so only the
barrier values and first derivatives are needed here.
"""

import math
from dataclasses import dataclass

import numpy as np

from .errors import NearAxisError
from .geometry import Vec3

D_TOL = 1e-3


@dataclass(frozen=True)
class LcbfParams:
    """Shaping parameters of one landing barrier."""
    alpha: float
    beta: float

    def __post_init__(self):
        if not self.alpha > 0:
            raise ValueError(f"alpha must be positive, got {self.alpha}")
        if not self.beta > 0:
            raise ValueError(f"beta must be positive, got {self.beta}")


@dataclass(frozen=True)
class BarrierEval:
    """Value, position gradient and explicit time partial of one barrier."""
    value: float
    grad_p: np.ndarray
    dt_partial: float


def lcbf_boundary(d: float, params: LcbfParams) -> float:
    """Height of the LCBF zero level set at horizontal distance d."""
    ad = params.alpha * d
    return params.beta * ad * math.exp(-ad)


def peak_boundary_height(params: LcbfParams) -> float:
    """Maximum boundary height, reached at d = 1/alpha."""
    return params.beta * math.exp(-1.0)


def shaping_from_peak(d_star: float, ez_star: float) -> LcbfParams:
    """Choose alpha, beta so the boundary peaks at (d_star, ez_star)."""
    if not d_star > 0:
        raise ValueError(f"peak radius must be positive, got {d_star}")
    if not ez_star > 0:
        raise ValueError(f"peak height must be positive, got {ez_star}")
    return LcbfParams(alpha=1.0 / d_star, beta=ez_star * math.e)


def lcbf_value(p: Vec3, p_d: Vec3, params: LcbfParams) -> float:
    """LCBF value only. Defined on the axis as well, where it equals e_z."""
    e = np.asarray(p, dtype=float) - np.asarray(p_d, dtype=float)
    d = math.hypot(e[0], e[1])
    return float(e[2] - lcbf_boundary(d, params))


def lcbf_eval(
    p: Vec3,
    p_d: Vec3,
    v_d: Vec3,
    params: LcbfParams,
    d_tol: float = D_TOL,
) -> BarrierEval:
    """LCBF value, gradient w.r.t. p and explicit time partial.

    Raises:
        NearAxisError: if the horizontal distance is below d_tol; the gradient
            direction is undefined on the axis and the caller must bypass the row.
    """
    e = np.asarray(p, dtype=float) - np.asarray(p_d, dtype=float)
    v_d = np.asarray(v_d, dtype=float)
    d = math.hypot(e[0], e[1])
    if d < d_tol:
        raise NearAxisError(d, d_tol)

    a, b = params.alpha, params.beta
    decay = math.exp(-a * d)
    value = e[2] - b * a * d * decay

    # d/dd of b*a*d*exp(-a d) is b*a*(1 - a d)*exp(-a d); chain rule through d = |e_xy|
    radial = b * a * decay * (a * d - 1.0) / d
    grad = np.array([radial * e[0], radial * e[1], 1.0])

    # e = p - p_d(t), so the explicit time partial is -grad . p_d'
    dt_partial = -float(grad @ v_d)
    return BarrierEval(value=float(value), grad_p=grad, dt_partial=dt_partial)


def scbf_eval(p_i: Vec3, p_j: Vec3, s_i: float, s_j: float) -> BarrierEval:
    """SCBF value and gradient w.r.t. (p_i, p_j). Time invariant."""
    delta = np.asarray(p_i, dtype=float) - np.asarray(p_j, dtype=float)
    value = float(delta @ delta - (s_i + s_j) ** 2)
    grad = np.concatenate([2.0 * delta, -2.0 * delta])
    return BarrierEval(value=value, grad_p=grad, dt_partial=0.0)
