"""CBF Safety Filter

Stacks every landing and spherical barrier into one affine constraint system
A u >= -b over the joint velocity input of all UAVs and solves

    u* = argmin ||u - u_nom||^2   s.t.   A u >= -b,   |u_k| <= sigma.

The Hessian is the identity, so the QP is a projection onto a polyhedron.
It is solved as a least-distance program through the Lawson-Hanson NNLS
active-set method (scipy.optimize.nnls), then polished on the detected
active set so the KKT conditions hold to machine precision.
"""

from dataclasses import dataclass, field
from typing import Iterator, List, Optional, Sequence, Set, Tuple, Union

import numpy as np
from scipy.optimize import nnls

from ..logs.logger import get_logger
from .barriers import D_TOL, LcbfParams, lcbf_eval, lcbf_value, scbf_eval
from .errors import NearAxisError, NonFiniteStateError, QpInfeasibleError
from .geometry import UavState, UgvState

logger = get_logger(__name__)

# LDP residual below this means the constraint cone contains the unit direction
_LDP_INFEASIBLE_RESIDUAL = 1e-10

RhoSpec = Union[float, Sequence[float]]


@dataclass(frozen=True)
class FilterConfig:
    """Class-K gains, input bound and solver settings of the safety filter.

    rho_l is one gain per UAV, rho_s one gain per pair in row order; a scalar
    applies to all of them.
    """
    rho_l: RhoSpec = 10.0
    rho_s: RhoSpec = 10.0
    sigma: float = 2.0
    d_tol: float = D_TOL
    qp_tol: float = 1e-8
    qp_max_iter: int = 500

    def __post_init__(self):
        for name in ("sigma", "d_tol", "qp_tol"):
            value = getattr(self, name)
            if not value > 0:
                raise ValueError(f"{name} must be positive, got {value}")
        if self.qp_max_iter < 1:
            raise ValueError(f"qp_max_iter must be positive, got {self.qp_max_iter}")
        for name in ("rho_l", "rho_s"):
            values = np.atleast_1d(np.asarray(getattr(self, name), dtype=float))
            if np.any(values <= 0):
                raise ValueError(f"{name} must be positive, got {getattr(self, name)}")

    def rho_l_of(self, i: int) -> float:
        """Gain of UAV i (1-based)."""
        return _pick(self.rho_l, i - 1, "rho_l")

    def rho_s_of(self, pair: int) -> float:
        """Gain of the pair in row order (0-based pair counter)."""
        return _pick(self.rho_s, pair, "rho_s")


def _pick(spec: RhoSpec, index: int, name: str) -> float:
    if np.isscalar(spec):
        return float(spec)
    values = list(spec)
    if index >= len(values):
        raise ValueError(f"{name} has {len(values)} entries, entry {index + 1} requested")
    return float(values[index])


@dataclass
class ConstraintSystem:
    """Stacked rows A u >= -b. Rows 0..N-1 are LCBF rows, the rest SCBF rows."""
    A: np.ndarray
    b: np.ndarray
    names: List[str]
    values: np.ndarray
    bypassed: np.ndarray

    @property
    def n_uavs(self) -> int:
        return self.A.shape[1] // 3

    @property
    def n_rows(self) -> int:
        return self.A.shape[0]


@dataclass(frozen=True)
class KktResiduals:
    stationarity: float
    primal: float
    complementarity: float

    def max(self) -> float:
        return max(self.stationarity, self.primal, self.complementarity)


@dataclass
class QpSolution:
    """Minimizer plus multipliers of the CBF rows and the box rows."""
    u: np.ndarray
    multipliers: np.ndarray
    box_multipliers: np.ndarray
    kkt: KktResiduals

    @property
    def active(self) -> np.ndarray:
        return self.multipliers > 0


@dataclass
class FilterResult:
    u_star: np.ndarray
    cs: ConstraintSystem
    margins: np.ndarray
    active: np.ndarray
    kkt: KktResiduals
    deviation: float
    pinned: Set[int] = field(default_factory=set)
    kkt_tol: float = 1e-8

    @property
    def sharing_ok(self) -> bool:
        """Every barrier condition holds simultaneously at u*."""
        return bool(np.all(self.margins >= -self.kkt_tol * max(1.0, float(np.max(np.abs(self.cs.b))))))


def pair_row_index(i: int, j: int, N: int) -> int:
    """1-based row of the SCBF between UAVs i < j among N UAVs."""
    if not (isinstance(i, (int, np.integer)) and isinstance(j, (int, np.integer))):
        raise ValueError(f"pair indices must be integers, got ({i!r}, {j!r})")
    if N < 2:
        raise ValueError(f"pairs need at least two UAVs, got N={N}")
    if not 1 <= i < j <= N:
        raise ValueError(f"pair ({i}, {j}) must satisfy 1 <= i < j <= {N}")
    return N + i + j - 2 + sum(N - k - 2 for k in range(1, i))


def pair_rows(N: int) -> Iterator[Tuple[int, int, int]]:
    """(i, j, row) for every pair, in row order."""
    for i in range(1, N + 1):
        for j in range(i + 1, N + 1):
            yield i, j, pair_row_index(i, j, N)


def row_names(N: int) -> List[str]:
    names = [f"h_l{i}" for i in range(1, N + 1)]
    sep = "" if N < 10 else "_"
    names += [f"h_s{i}{sep}{j}" for i, j, _ in pair_rows(N)]
    return names


def assemble_constraints(
    states: Sequence[UavState],
    pads: Sequence[UgvState],
    lcbf: Sequence[LcbfParams],
    radii: Sequence[float],
    cfg: FilterConfig,
    landed: Optional[Set[int]] = None,
) -> ConstraintSystem:
    """Build A and b from all barriers.

    ``pads[i]`` is the landing pad (target UGV) of UAV i+1. UAV ids in
    ``landed`` are 1-based. Near-axis and landed LCBF rows are replaced by the
    trivially satisfied row (zeros, b = 1); their barrier value is still
    recorded for logging.
    """
    N = len(states)
    if N < 1:
        raise ValueError("at least one UAV is required")
    if not len(pads) == len(lcbf) == len(radii) == N:
        raise ValueError(
            f"inconsistent lengths: {N} states, {len(pads)} pads, "
            f"{len(lcbf)} LCBF params, {len(radii)} radii"
        )
    landed = landed or set()

    Q = N * (N + 1) // 2
    A = np.zeros((Q, 3 * N))
    b = np.zeros(Q)
    values = np.zeros(Q)
    bypassed = np.zeros(Q, dtype=bool)

    for i in range(1, N + 1):
        row = i - 1
        s, pad, params = states[row], pads[row], lcbf[row]
        values[row] = lcbf_value(s.position, pad.position, params)
        if i in landed:
            bypassed[row] = True
            b[row] = 1.0
            continue
        try:
            ev = lcbf_eval(s.position, pad.position, pad.velocity, params, cfg.d_tol)
        except NearAxisError:
            bypassed[row] = True
            b[row] = 1.0
            continue
        A[row, 3 * row:3 * row + 3] = ev.grad_p
        b[row] = cfg.rho_l_of(i) * ev.value + ev.dt_partial

    for pair, (i, j, nu) in enumerate(pair_rows(N)):
        row = nu - 1
        ev = scbf_eval(states[i - 1].position, states[j - 1].position, radii[i - 1], radii[j - 1])
        A[row, 3 * (i - 1):3 * i] = ev.grad_p[:3]
        A[row, 3 * (j - 1):3 * j] = ev.grad_p[3:]
        b[row] = cfg.rho_s_of(pair) * ev.value + ev.dt_partial
        values[row] = ev.value

    return ConstraintSystem(A=A, b=b, names=row_names(N), values=values, bypassed=bypassed)


def _least_distance(G: np.ndarray, h: np.ndarray, max_iter: int) -> Tuple[np.ndarray, np.ndarray]:
    """min ||x|| s.t. G x >= h, via the NNLS dual. Returns (x, multipliers)."""
    m, n = G.shape
    E = np.vstack([G.T, h[None, :]])
    f = np.zeros(n + 1)
    f[n] = 1.0
    try:
        lam, _ = nnls(E, f, maxiter=max_iter)
    except RuntimeError as e:
        raise QpInfeasibleError(f"active-set iteration limit reached ({e})")
    r = E @ lam - f
    if np.linalg.norm(r) < _LDP_INFEASIBLE_RESIDUAL:
        raise QpInfeasibleError("constraint set is empty")
    x = -r[:n] / r[n]
    mu = lam / (1.0 - h @ lam)
    return x, mu


def _polish(G: np.ndarray, h: np.ndarray, x: np.ndarray, mu: np.ndarray, tol: float):
    """Re-solve the equality-constrained projection on the active rows."""
    active = np.flatnonzero(mu > 0)
    if active.size == 0:
        return np.zeros_like(x), np.zeros_like(mu)
    Ga = G[active]
    nu, *_ = np.linalg.lstsq(Ga @ Ga.T, h[active], rcond=None)
    x_new = Ga.T @ nu
    if np.any(nu < -tol) or np.any(G @ x_new - h < -tol):
        return x, mu
    mu_new = np.zeros_like(mu)
    mu_new[active] = np.maximum(nu, 0.0)
    return x_new, mu_new


def solve_qp(u_nom: np.ndarray, cs: ConstraintSystem, cfg: FilterConfig) -> QpSolution:
    """Closest input to u_nom satisfying A u >= -b and the box |u_k| <= sigma.

    Raises:
        QpInfeasibleError: no point satisfies every row, or the solver hit
            qp_max_iter. The most violated row at the box-clipped nominal
            input is attached.
        NonFiniteStateError: u_nom, A or b contain NaN or inf.
    """
    u_nom = np.asarray(u_nom, dtype=float)
    A, b = cs.A, cs.b
    if not (np.all(np.isfinite(u_nom)) and np.all(np.isfinite(A)) and np.all(np.isfinite(b))):
        raise NonFiniteStateError("non-finite QP input")
    n = u_nom.size
    if A.shape[1] != n:
        raise ValueError(f"A has {A.shape[1]} columns, u_nom has {n} entries")

    sigma = cfg.sigma
    eye = np.eye(n)
    # u = u_nom + x turns the QP into min ||x|| s.t. G x >= h
    G = np.vstack([A, eye, -eye])
    h = np.concatenate([-b - A @ u_nom, -sigma - u_nom, -sigma + u_nom])

    try:
        x, mu = _least_distance(G, h, cfg.qp_max_iter)
    except QpInfeasibleError as e:
        row, violation = _most_violated(cs, np.clip(u_nom, -sigma, sigma))
        logger.debug("qp_infeasible", reason=e.reason, row=row, violation=violation)
        raise QpInfeasibleError(e.reason, row=row, violation=violation) from e

    x, mu = _polish(G, h, x, mu, cfg.qp_tol)
    u = u_nom + x

    slack = G @ x - h
    if np.min(slack) < -cfg.qp_tol * max(1.0, float(np.max(np.abs(h)))):
        row, violation = _most_violated(cs, u)
        raise QpInfeasibleError("solution violates the constraint set", row=row, violation=violation)

    q = A.shape[0]
    kkt = KktResiduals(
        stationarity=float(np.linalg.norm(x - G.T @ mu)),
        primal=float(max(0.0, -np.min(slack))),
        complementarity=float(np.max(np.abs(mu * slack))) if mu.size else 0.0,
    )
    box = mu[q:q + n] - mu[q + n:]
    return QpSolution(u=u, multipliers=mu[:q], box_multipliers=box, kkt=kkt)


def _most_violated(cs: ConstraintSystem, u: np.ndarray) -> Tuple[Optional[int], float]:
    if cs.n_rows == 0:
        return None, float("nan")
    margins = cs.A @ u + cs.b
    row = int(np.argmin(margins))
    return row, float(-margins[row])


def filter(
    u_nom: np.ndarray,
    states: Sequence[UavState],
    pads: Sequence[UgvState],
    lcbf: Sequence[LcbfParams],
    radii: Sequence[float],
    cfg: FilterConfig,
    landed: Optional[Set[int]] = None,
) -> FilterResult:
    """Assemble, solve and report margins for one tick.

    Landed UAVs have their input pinned to their pad velocity; their SCBF
    rows stay in the system as constraints on the remaining UAVs.
    """
    landed = set(landed or ())
    u_nom = np.asarray(u_nom, dtype=float).copy()
    cs = assemble_constraints(states, pads, lcbf, radii, cfg, landed)
    N = len(states)

    fixed_cols = np.zeros(3 * N, dtype=bool)
    for i in landed:
        fixed_cols[3 * (i - 1):3 * i] = True
        u_nom[3 * (i - 1):3 * i] = pads[i - 1].velocity
    free_cols = ~fixed_cols

    u_star = u_nom.copy()
    multipliers = np.zeros(cs.n_rows)
    kkt = KktResiduals(0.0, 0.0, 0.0)

    if np.any(free_cols):
        b_shift = cs.b + cs.A[:, fixed_cols] @ u_nom[fixed_cols]
        A_free = cs.A[:, free_cols]
        live = np.linalg.norm(A_free, axis=1) > 0
        dead_margin = b_shift[~live]
        if dead_margin.size and np.min(dead_margin) < -cfg.qp_tol:
            rows = np.flatnonzero(~live)
            worst = rows[int(np.argmin(dead_margin))]
            raise QpInfeasibleError(
                "row involves only landed UAVs and is violated",
                row=int(worst), violation=float(-np.min(dead_margin)),
            )
        reduced = ConstraintSystem(
            A=A_free[live], b=b_shift[live],
            names=[n for n, keep in zip(cs.names, live) if keep],
            values=cs.values[live], bypassed=cs.bypassed[live],
        )
        try:
            sol = solve_qp(u_nom[free_cols], reduced, cfg)
        except QpInfeasibleError as e:
            row = None if e.row is None else int(np.flatnonzero(live)[e.row])
            raise QpInfeasibleError(e.reason, row=row, violation=e.violation) from e
        u_star[free_cols] = sol.u
        multipliers[live] = sol.multipliers
        kkt = sol.kkt

    margins = cs.A @ u_star + cs.b
    return FilterResult(
        u_star=u_star,
        cs=cs,
        margins=margins,
        active=multipliers > 0,
        kkt=kkt,
        deviation=float(np.linalg.norm(u_star - u_nom)),
        pinned=landed,
        kkt_tol=cfg.qp_tol,
    )
