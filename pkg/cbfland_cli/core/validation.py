"""Built-in validation suites.

Each check draws its samples from a seeded generator, compares an analytic
result against an independent numerical oracle and reports the worst error
seen. ``run_validation`` runs all of them; the CLI prints the table and
exits nonzero when any check fails.
"""

import math
import tempfile
from dataclasses import dataclass
from enum import Enum
from itertools import combinations
from pathlib import Path
from typing import Callable, Iterable, List, Optional, Sequence, Tuple

import numpy as np
from scipy.optimize import minimize_scalar
from scipy.spatial.transform import Rotation

from ..config.loader import ValidationConfig
from ..config.scenario import load_scenario
from ..logs.logger import get_logger, performance_timer
from .barriers import (
    BarrierEval,
    LcbfParams,
    lcbf_boundary,
    lcbf_eval,
    lcbf_value,
    scbf_eval,
    shaping_from_peak,
)
from .controllers import attitude_error, desired_attitude
from .errors import CbfLandError, QpInfeasibleError
from .export import export_run, read_barriers_csv, read_states_csv, recompute_barriers
from .geometry import UavState, UgvState, euler_angles, hat, is_rotation, reorthonormalize, vee
from .safety_filter import FilterConfig, assemble_constraints, pair_row_index, solve_qp
from .simulator import run_scenario

logger = get_logger(__name__)


class Fault(str, Enum):
    """Deliberate defects for checking that the suites catch them."""
    LCBF_GRADIENT_SIGN = "lcbf-gradient-sign"


@dataclass
class CheckResult:
    name: str
    passed: bool
    samples: int
    worst: float
    tolerance: float
    detail: str = ""


LcbfEvaluator = Callable[[np.ndarray, np.ndarray, np.ndarray, LcbfParams], BarrierEval]


def _lcbf_with_faults(faults: Iterable[Fault]) -> LcbfEvaluator:
    faults = set(faults)

    def evaluate(p, p_d, v_d, params):
        ev = lcbf_eval(p, p_d, v_d, params)
        if Fault.LCBF_GRADIENT_SIGN in faults:
            grad = ev.grad_p.copy()
            grad[:2] = -grad[:2]
            return BarrierEval(value=ev.value, grad_p=grad, dt_partial=-float(grad @ v_d))
        return ev

    return evaluate


def _central_gradient(f: Callable[[np.ndarray], float], x: np.ndarray, step: float) -> np.ndarray:
    grad = np.zeros_like(x)
    for k in range(x.size):
        dx = np.zeros_like(x)
        dx[k] = step
        grad[k] = (f(x + dx) - f(x - dx)) / (2.0 * step)
    return grad


def _relative(a, b) -> float:
    """|a - b| relative to |b|, floored at unit scale."""
    a, b = np.atleast_1d(a), np.atleast_1d(b)
    return float(np.linalg.norm(a - b) / max(1.0, float(np.linalg.norm(b))))


def _random_lcbf_point(rng: np.random.Generator):
    params = LcbfParams(alpha=rng.uniform(0.5, 5.0), beta=rng.uniform(0.2, 3.0))
    p_d = np.array([rng.uniform(-3, 3), rng.uniform(-3, 3), rng.uniform(0.0, 0.5)])
    d = rng.uniform(0.05, 3.0)
    theta = rng.uniform(0, 2 * math.pi)
    e = np.array([d * math.cos(theta), d * math.sin(theta), rng.uniform(-1.0, 2.0)])
    v_d = rng.uniform(-1.0, 1.0, size=3)
    return p_d + e, p_d, v_d, params


def check_lcbf_gradient(cfg: ValidationConfig, faults: Iterable[Fault] = ()) -> CheckResult:
    """Position gradient and time partial of the LCBF against central differences."""
    rng = np.random.default_rng(cfg.seed)
    evaluate = _lcbf_with_faults(faults)
    h = cfg.fd_step
    worst = 0.0
    for _ in range(cfg.gradient_points):
        p, p_d, v_d, params = _random_lcbf_point(rng)
        ev = evaluate(p, p_d, v_d, params)
        fd_grad = _central_gradient(lambda x: lcbf_value(x, p_d, params), p, h)
        fd_dt = (lcbf_value(p, p_d + v_d * h, params) - lcbf_value(p, p_d - v_d * h, params)) / (2 * h)
        worst = max(worst, _relative(ev.grad_p, fd_grad), _relative(ev.dt_partial, fd_dt))
    return CheckResult("lcbf_gradient", worst < cfg.gradient_rel_tol, cfg.gradient_points,
                       worst, cfg.gradient_rel_tol)


def check_scbf_gradient(cfg: ValidationConfig) -> CheckResult:
    rng = np.random.default_rng(cfg.seed + 1)
    h = cfg.fd_step
    worst = 0.0
    for _ in range(cfg.gradient_points):
        p_i, p_j = rng.uniform(-3, 3, size=3), rng.uniform(-3, 3, size=3)
        s_i, s_j = rng.uniform(0.1, 0.5, size=2)
        ev = scbf_eval(p_i, p_j, s_i, s_j)
        x0 = np.concatenate([p_i, p_j])
        fd = _central_gradient(lambda x: scbf_eval(x[:3], x[3:], s_i, s_j).value, x0, h)
        worst = max(worst, _relative(ev.grad_p, fd), abs(ev.dt_partial))
    return CheckResult("scbf_gradient", worst < cfg.gradient_rel_tol, cfg.gradient_points,
                       worst, cfg.gradient_rel_tol)


def check_pair_index(cfg: ValidationConfig) -> CheckResult:
    """Pair rows cover N+1 .. N(N+1)/2 exactly once for every N."""
    failures = []
    checked = 0
    for N in range(2, cfg.max_pairs_n + 1):
        rows = [pair_row_index(i, j, N) for i, j in combinations(range(1, N + 1), 2)]
        checked += len(rows)
        if sorted(rows) != list(range(N + 1, N * (N + 1) // 2 + 1)):
            failures.append(N)
    detail = f"not a bijection for N={failures}" if failures else ""
    return CheckResult("pair_index_bijection", not failures, checked, float(len(failures)), 0.0, detail)


def check_rotations(cfg: ValidationConfig) -> CheckResult:
    """hat/vee, Euler angle and polar projection round trips; desired attitude validity."""
    rng = np.random.default_rng(cfg.seed + 2)
    rotations = Rotation.random(cfg.rotation_samples, cfg.seed + 2).as_matrix()
    tol = 1e-9
    worst = 0.0
    invalid = 0
    for R in rotations:
        v = rng.normal(size=3)
        worst = max(worst, float(np.linalg.norm(vee(hat(v)) - v)))

        roll, pitch, yaw = euler_angles(R)
        back = Rotation.from_euler("ZYX", [yaw, pitch, roll]).as_matrix()
        worst = max(worst, float(np.linalg.norm(back - R)))
        worst = max(worst, float(np.linalg.norm(attitude_error(R, R))))

        projected = reorthonormalize(R + 1e-6 * rng.normal(size=(3, 3)))
        if not is_rotation(projected) or np.linalg.norm(projected - R) > 1e-5:
            invalid += 1

        thrust = R[:, 2] * rng.uniform(1.0, 20.0)
        try:
            R_d = desired_attitude(thrust, rng.uniform(-math.pi, math.pi))
        except CbfLandError:
            continue
        if not is_rotation(R_d):
            invalid += 1
        worst = max(worst, float(np.linalg.norm(R_d[:, 2] - R[:, 2])))

    passed = worst < tol and invalid == 0
    detail = f"{invalid} projected or desired attitude(s) not in SO(3)" if invalid else ""
    return CheckResult("rotation_round_trip", passed, cfg.rotation_samples, worst, tol, detail)


def check_shaping(cfg: ValidationConfig) -> CheckResult:
    """shaping_from_peak then a numeric argmax of the boundary recovers the peak."""
    rng = np.random.default_rng(cfg.seed + 3)
    worst = 0.0
    for _ in range(cfg.shaping_samples):
        d_star, ez_star = rng.uniform(0.1, 3.0), rng.uniform(0.05, 3.0)
        params = shaping_from_peak(d_star, ez_star)
        found = minimize_scalar(
            lambda d: -lcbf_boundary(d, params),
            bounds=(1e-9, 10.0 * d_star),
            method="bounded",
            options={"xatol": 1e-12, "maxiter": 500},
        )
        worst = max(worst, abs(found.x - d_star), abs(-found.fun - ez_star))
    return CheckResult("shaping_identity", worst < cfg.oracle_tol, cfg.shaping_samples,
                       worst, cfg.oracle_tol)


def _random_instance(rng: np.random.Generator, N: int):
    """A filter problem with moderate barrier levels.

    UAVs are placed first, some of them close to an earlier one so the
    spherical rows matter; each pad is then placed relative to its UAV.
    """
    lcbf = [LcbfParams(alpha=rng.uniform(1.0, 3.0), beta=rng.uniform(0.5, 1.5)) for _ in range(N)]
    radii = list(rng.uniform(0.1, 0.3, size=N))
    positions: List[np.ndarray] = []
    for i in range(N):
        if i and rng.random() < 0.7:
            j = int(rng.integers(i))
            direction = rng.normal(size=3)
            direction /= np.linalg.norm(direction)
            gap = radii[i] + radii[j] + rng.uniform(0.05, 0.6)
            positions.append(positions[j] + gap * direction)
        else:
            positions.append(np.array([3.0 * i, rng.uniform(-0.5, 0.5), rng.uniform(0.5, 1.5)]))

    states, pads = [], []
    for i, p in enumerate(positions):
        d = rng.uniform(0.05, 1.5)
        theta = rng.uniform(0, 2 * math.pi)
        e = np.array([d * math.cos(theta), d * math.sin(theta),
                      lcbf_boundary(d, lcbf[i]) + rng.uniform(-0.2, 1.0)])
        states.append(UavState(position=p, velocity=np.zeros(3)))
        pads.append(UgvState(position=p - e, velocity=np.append(rng.uniform(-0.3, 0.3, size=2), 0.0)))

    fcfg = FilterConfig(
        rho_l=list(rng.uniform(0.5, 2.0, size=N)),
        rho_s=list(rng.uniform(0.5, 2.0, size=max(N * (N - 1) // 2, 1))),
        sigma=2.0,
    )
    u_nom = rng.uniform(-1.6, 1.6, size=3 * N)
    return u_nom, states, pads, lcbf, radii, fcfg


def enumerate_active_sets(
    u_nom: np.ndarray,
    A: np.ndarray,
    b: np.ndarray,
    sigma: float,
    max_active: Optional[int] = None,
    tol: float = 1e-10,
) -> Optional[np.ndarray]:
    """Projection of u_nom onto {A u >= -b, |u_k| <= sigma} by trying every
    candidate active set in order of size. At most min(m, n) rows can be
    independent, which is also the default cap. None when no KKT point
    exists among sets of at most max_active rows."""
    n = u_nom.size
    q = A.shape[0]
    eye = np.eye(n)
    G = np.vstack([A, eye, -eye])
    h = np.concatenate([-b - A @ u_nom, -sigma - u_nom, -sigma + u_nom])
    scale = max(1.0, float(np.max(np.abs(h))))
    rows = [r for r in range(G.shape[0]) if np.any(G[r])]
    limit = min(n, len(rows))
    if max_active is not None:
        limit = min(limit, max_active)

    for size in range(limit + 1):
        for subset in combinations(rows, size):
            box = [r - q for r in subset if r >= q]
            if len({c % n for c in box}) != len(box):
                continue
            if size == 0:
                x = np.zeros(n)
            else:
                Gs = G[list(subset)]
                gram = Gs @ Gs.T
                if np.linalg.cond(gram) > 1e10:
                    continue
                nu = np.linalg.solve(gram, h[list(subset)])
                if np.any(nu < -tol):
                    continue
                x = Gs.T @ nu
            if np.all(G @ x - h >= -tol * scale):
                return u_nom + x
    return None


def check_qp_oracle(cfg: ValidationConfig, qp_tol: Optional[float] = None) -> CheckResult:
    """solve_qp against active-set enumeration on random instances with N <= 3."""
    rng = np.random.default_rng(cfg.seed + 4)
    worst_u, worst_kkt = 0.0, 0.0
    mismatches: List[str] = []
    for k in range(cfg.qp_instances):
        N = 1 + k % 3
        u_nom, states, pads, lcbf, radii, fcfg = _random_instance(rng, N)
        if qp_tol is not None:
            fcfg = FilterConfig(rho_l=fcfg.rho_l, rho_s=fcfg.rho_s, sigma=fcfg.sigma, qp_tol=qp_tol)
        cs = assemble_constraints(states, pads, lcbf, radii, fcfg)
        oracle = enumerate_active_sets(u_nom, cs.A, cs.b, fcfg.sigma)
        try:
            sol = solve_qp(u_nom, cs, fcfg)
        except QpInfeasibleError:
            if oracle is not None:
                mismatches.append(f"instance {k}: reported infeasible, oracle found a solution")
            continue
        if oracle is None:
            mismatches.append(f"instance {k}: oracle found no solution")
            continue
        worst_u = max(worst_u, float(np.max(np.abs(sol.u - oracle))))
        worst_kkt = max(worst_kkt, sol.kkt.max())

    passed = not mismatches and worst_u < cfg.oracle_tol and worst_kkt < cfg.kkt_tol
    detail = "; ".join(mismatches[:3])
    if worst_kkt >= cfg.kkt_tol:
        detail = (detail + "; " if detail else "") + f"KKT residual {worst_kkt:.2e}"
    return CheckResult("qp_oracle", passed, cfg.qp_instances, worst_u, cfg.oracle_tol, detail)


def check_csv_round_trip(cfg: ValidationConfig, horizon: float = 1.0) -> CheckResult:
    """Re-read states.csv of a short bundled run and recompute barriers.csv."""
    tol = 1e-9
    scenario = load_scenario("scenario1")
    scenario = scenario.model_copy(update={"t_final": scenario.t_start + horizon})
    log = run_scenario(scenario, progress_every=10**9)
    with tempfile.TemporaryDirectory(prefix="cbfland-validate-") as tmp:
        files = export_run(log, Path(tmp), {"scenario": scenario.name})
        states = read_states_csv(files["states"])
        _, _, logged = read_barriers_csv(files["barriers"])
        recomputed = recompute_barriers(states, scenario)
    worst = float(np.max(np.abs(recomputed - logged))) if logged.size else 0.0
    return CheckResult("csv_round_trip", worst < tol, len(log), worst, tol)


def run_validation(
    cfg: Optional[ValidationConfig] = None,
    qp_tol: Optional[float] = None,
    faults: Sequence[Fault] = (),
) -> List[CheckResult]:
    """Run every suite and return one result per check."""
    cfg = cfg or ValidationConfig()
    faults = [Fault(f) for f in faults]
    suites: List[Tuple[str, Callable[[], CheckResult]]] = [
        ("lcbf_gradient", lambda: check_lcbf_gradient(cfg, faults)),
        ("scbf_gradient", lambda: check_scbf_gradient(cfg)),
        ("qp_oracle", lambda: check_qp_oracle(cfg, qp_tol)),
        ("pair_index_bijection", lambda: check_pair_index(cfg)),
        ("rotation_round_trip", lambda: check_rotations(cfg)),
        ("shaping_identity", lambda: check_shaping(cfg)),
        ("csv_round_trip", lambda: check_csv_round_trip(cfg)),
    ]
    results = []
    for name, suite in suites:
        with performance_timer(f"validate {name}", logger):
            try:
                result = suite()
            except Exception as e:
                logger.error("validation_check_crashed", check=name, error=str(e), exc_info=True)
                result = CheckResult(name, False, 0, math.nan, math.nan, f"{type(e).__name__}: {e}")
        logger.info("validation_check", check=name, passed=result.passed, worst=result.worst)
        results.append(result)
    return results
