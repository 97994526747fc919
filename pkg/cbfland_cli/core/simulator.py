"""Multi-UAV Landing Simulator

Runs a scenario tick by tick at the outer (QP) rate:

1. pads move along their motion programs;
2. UAVs still being carried are pinned to their carrier UGV;
3. UAVs inside the landing tolerance on their descent axis touch down and
   stay pinned to their pad;
4. the nominal position controller and the CBF safety filter produce u*;
5. the UAVs advance, either kinematically (p' = u*) or through the velocity
   loop, attitude loop and rigid-body dynamics at the inner rate.

Every tick is logged, including the last one, so the log is a uniform grid
from t_start to t_final (or to the halting tick).
"""

import math
from dataclasses import dataclass, field
from itertools import combinations
from typing import Any, Dict, List, Optional, Sequence, Set, Tuple

import numpy as np

from ..config.scenario import Fidelity, ScenarioConfig
from ..logs.logger import ProgressLogger, get_logger
from .barriers import lcbf_value, scbf_eval
from .controllers import (
    AttitudeReference,
    applied_force,
    attitude_control,
    desired_attitude,
    nominal_position_control,
    velocity_tracking_control,
)
from .errors import CbfLandError, NonFiniteStateError, QpInfeasibleError, SimulationHalted
from .geometry import GRAVITY, UavState, UgvState, step_full_dynamics, step_kinematic
from .motion import MotionProgram, ugv_state_at
from .safety_filter import FilterResult, filter as safety_filter, row_names

logger = get_logger(__name__)

__all__ = [
    "TickRecord",
    "TouchdownEvent",
    "SimLog",
    "SafetySummary",
    "ugv_state_at",
    "run_scenario",
    "barrier_values",
    "safety_metrics",
]


@dataclass(frozen=True)
class TouchdownEvent:
    uav: int
    target: int
    tick: int
    time: float


@dataclass
class TickRecord:
    """Everything known at one outer tick."""
    tick: int
    time: float
    controller_on: bool
    positions: np.ndarray
    velocities: np.ndarray
    attitudes: np.ndarray
    body_rates: np.ndarray
    pad_positions: np.ndarray
    pad_velocities: np.ndarray
    ugv_positions: np.ndarray
    ugv_velocities: np.ndarray
    u_nom: np.ndarray
    u_star: np.ndarray
    barriers: np.ndarray
    margins: np.ndarray
    active: np.ndarray
    bypassed: np.ndarray
    kkt_residual: float = 0.0
    sharing_ok: bool = True
    deviation: float = 0.0
    landed: Tuple[int, ...] = ()


@dataclass
class SimLog:
    """Per-tick history of one run."""
    scenario: str
    fidelity: str
    n_uavs: int
    targets: List[int]
    row_names: List[str]
    dt_outer: float
    ticks: List[TickRecord] = field(default_factory=list)
    touchdowns: List[TouchdownEvent] = field(default_factory=list)
    halt: Optional[Dict[str, Any]] = None

    def append(self, record: TickRecord) -> None:
        self.ticks.append(record)

    def __len__(self) -> int:
        return len(self.ticks)

    def stack(self, name: str) -> np.ndarray:
        """Stack one TickRecord attribute over time."""
        if not self.ticks:
            return np.empty((0,))
        return np.stack([np.asarray(getattr(r, name)) for r in self.ticks])

    @property
    def times(self) -> np.ndarray:
        return np.array([r.time for r in self.ticks])

    @property
    def halted(self) -> bool:
        return self.halt is not None


def barrier_values(
    positions: np.ndarray,
    pad_positions: np.ndarray,
    cfg: ScenarioConfig,
) -> np.ndarray:
    """All h_l and h_s values in row order, defined everywhere including the axis."""
    N = cfg.n_uavs
    lcbf = cfg.lcbf_params()
    radii = cfg.radii()
    values = [lcbf_value(positions[i], pad_positions[i], lcbf[i]) for i in range(N)]
    for i, j in combinations(range(N), 2):
        values.append(scbf_eval(positions[i], positions[j], radii[i], radii[j]).value)
    return np.array(values)


class _Run:
    """Mutable state of one scenario run."""

    def __init__(self, cfg: ScenarioConfig, progress_every: int):
        self.cfg = cfg
        self.N = cfg.n_uavs
        self.params = cfg.uav_params()
        self.lcbf = cfg.lcbf_params()
        self.radii = cfg.radii()
        self.fcfg = cfg.filter_config()
        self.gains = cfg.gain_set()
        self.programs: List[MotionProgram] = cfg.programs()
        self.targets = [u.target for u in cfg.uav]
        self.carriers = [u.carrier for u in cfg.uav]
        self.masses = np.array([p.mass for p in self.params])
        self.landed: Set[int] = set()
        self.u_prev: Optional[np.ndarray] = None
        self.progress = ProgressLogger(cfg.n_ticks + 1, f"run {cfg.name}", every=progress_every)

        hover = [desired_attitude(p.mass * GRAVITY, cfg.psi_d) for p in self.params]
        self.hover = hover
        self.references = [AttitudeReference(cfg.psi_d, R) for R in hover]

        ugvs = self._ugvs(cfg.t_start)
        self.states: List[UavState] = []
        for i, u in enumerate(cfg.uav):
            if u.carrier is not None:
                carrier = ugvs[u.carrier - 1]
                p, v = carrier.position, carrier.velocity
            else:
                p, v = np.asarray(u.position, dtype=float), np.zeros(3)
            self.states.append(UavState(position=p.copy(), velocity=v.copy(), attitude=hover[i]))

        self.log = SimLog(
            scenario=cfg.name,
            fidelity=cfg.fidelity.value,
            n_uavs=self.N,
            targets=list(self.targets),
            row_names=row_names(self.N),
            dt_outer=cfg.dt_outer,
        )

    def _ugvs(self, t: float) -> List[UgvState]:
        return [ugv_state_at(p, t) for p in self.programs]

    def _pads(self, ugvs: Sequence[UgvState]) -> List[UgvState]:
        return [ugvs[k - 1] for k in self.targets]

    def _positions(self, states: Sequence[UavState]) -> np.ndarray:
        return np.stack([s.position for s in states])

    # -- tick phases -------------------------------------------------------

    def pin_carried(self, ugvs: Sequence[UgvState]) -> None:
        for i, carrier in enumerate(self.carriers):
            if carrier is None:
                self.states[i] = self.states[i].with_(velocity=np.zeros(3))
                continue
            pad = ugvs[carrier - 1]
            self.states[i] = UavState(
                position=pad.position.copy(), velocity=pad.velocity.copy(),
                attitude=self.hover[i], body_rate=np.zeros(3),
            )

    def pin_landed(self, pads: Sequence[UgvState]) -> None:
        for i in self.landed:
            pad = pads[i - 1]
            self.states[i - 1] = self.states[i - 1].with_(
                position=pad.position.copy(), velocity=pad.velocity.copy(),
            )

    def detect_touchdowns(self, k: int, t: float, pads: Sequence[UgvState]) -> None:
        for i in range(1, self.N + 1):
            if i in self.landed:
                continue
            e = self.states[i - 1].position - pads[i - 1].position
            if np.linalg.norm(e) <= self.cfg.landing_tolerance and math.hypot(e[0], e[1]) < self.fcfg.d_tol:
                self.landed.add(i)
                event = TouchdownEvent(uav=i, target=self.targets[i - 1], tick=k, time=t)
                self.log.touchdowns.append(event)
                logger.info("touchdown", uav=i, target=event.target, time=round(t, 6), tick=k)
        self.pin_landed(pads)

    def closed_loop(self, t: float, states: Sequence[UavState]) -> Tuple[np.ndarray, FilterResult]:
        """Nominal input and filter result at (t, states)."""
        pads = self._pads(self._ugvs(t))
        P = self._positions(states).reshape(-1)
        Pd = np.concatenate([p.position for p in pads])
        Vd = np.concatenate([p.velocity for p in pads])
        u_nom = nominal_position_control(P, Pd, Vd, self.gains.kp)
        result = safety_filter(u_nom, states, pads, self.lcbf, self.radii, self.fcfg, self.landed)
        return u_nom, result

    def set_velocities(self, u: np.ndarray) -> None:
        for i in range(self.N):
            self.states[i] = self.states[i].with_(velocity=u[3 * i:3 * i + 3].copy())

    def advance_kinematic(self, u_star: np.ndarray) -> None:
        for i in range(self.N):
            s = self.states[i]
            self.states[i] = s.with_(
                position=step_kinematic(s.position, u_star[3 * i:3 * i + 3], self.cfg.dt_outer)
            )

    def _kv(self, i: int) -> np.ndarray:
        kv = np.asarray(self.gains.kv)
        return kv[3 * i:3 * i + 3, 3 * i:3 * i + 3] if kv.ndim == 2 else kv[3 * i:3 * i + 3]

    def command_acceleration(self, u_star: np.ndarray) -> Optional[np.ndarray]:
        """Backward difference of u* over one outer period.

        The first controlled period differences against the release velocity.
        """
        if not self.cfg.gains.accel_feedforward:
            return None
        if self.u_prev is None:
            self.u_prev = np.concatenate([s.velocity for s in self.states])
        accel = (u_star - self.u_prev) / self.cfg.dt_outer
        self.u_prev = np.array(u_star, dtype=float)
        return accel

    def advance_full(self, k: int, u_star: np.ndarray) -> None:
        """Velocity, attitude and rigid-body loops over one outer period.

        The desired attitude follows the feedback thrust; the commanded
        acceleration only enters the applied force.
        """
        cfg = self.cfg
        dt_in = cfg.dt_outer / cfg.inner_steps
        accel = self.command_acceleration(u_star)

        setpoints = []
        for i in range(self.N):
            s = self.states[i]
            tau_p = velocity_tracking_control(u_star[3 * i:3 * i + 3], s.velocity,
                                              self._kv(i), self.masses[i])
            setpoints.append(self.references[i].update(tau_p, cfg.dt_outer, uav=i + 1))

        for _ in range(cfg.inner_steps):
            for i in range(self.N):
                if (i + 1) in self.landed:
                    continue
                s = self.states[i]
                tau_p = velocity_tracking_control(
                    u_star[3 * i:3 * i + 3], s.velocity, self._kv(i), self.masses[i],
                    accel=None if accel is None else accel[3 * i:3 * i + 3],
                )
                force = applied_force(tau_p, s.attitude, cfg.thrust_model)
                tau_q = attitude_control(s, setpoints[i], self.params[i], self.gains.k1, self.gains.k2)
                try:
                    self.states[i] = step_full_dynamics(s, self.params[i], force, tau_q, dt_in)
                except NonFiniteStateError as e:
                    raise NonFiniteStateError(str(e), uav=i + 1, tick=k) from e

    # -- logging -----------------------------------------------------------

    def record(
        self,
        k: int,
        t: float,
        controller_on: bool,
        ugvs: Sequence[UgvState],
        u_nom: np.ndarray,
        u_star: np.ndarray,
        result: Optional[FilterResult],
    ) -> None:
        pads = self._pads(ugvs)
        P = self._positions(self.states)
        Q = len(self.log.row_names)
        if result is not None:
            margins, active = result.margins.copy(), result.active.copy()
            bypassed = result.cs.bypassed.copy()
            kkt, sharing, deviation = result.kkt.max(), result.sharing_ok, result.deviation
        else:
            margins, active = np.full(Q, np.nan), np.zeros(Q, dtype=bool)
            bypassed = np.zeros(Q, dtype=bool)
            kkt, sharing, deviation = 0.0, True, 0.0

        self.log.append(TickRecord(
            tick=k,
            time=t,
            controller_on=controller_on,
            positions=P,
            velocities=np.stack([s.velocity for s in self.states]),
            attitudes=np.stack([s.attitude for s in self.states]),
            body_rates=np.stack([s.body_rate for s in self.states]),
            pad_positions=np.stack([p.position for p in pads]),
            pad_velocities=np.stack([p.velocity for p in pads]),
            ugv_positions=np.stack([g.position for g in ugvs]),
            ugv_velocities=np.stack([g.velocity for g in ugvs]),
            u_nom=np.asarray(u_nom, dtype=float).copy(),
            u_star=np.asarray(u_star, dtype=float).copy(),
            barriers=barrier_values(P, np.stack([p.position for p in pads]), self.cfg),
            margins=margins,
            active=active,
            bypassed=bypassed,
            kkt_residual=kkt,
            sharing_ok=sharing,
            deviation=deviation,
            landed=tuple(sorted(self.landed)),
        ))
        self.progress.step(time=round(t, 6), landed=len(self.landed))


def _halt_record(run: _Run, cause: CbfLandError, k: int, t: float) -> Dict[str, Any]:
    record: Dict[str, Any] = {
        "tick": k,
        "time": t,
        "error": type(cause).__name__,
        "message": str(cause),
        "positions": [s.position.tolist() for s in run.states],
        "velocities": [s.velocity.tolist() for s in run.states],
        "landed": sorted(run.landed),
    }
    if isinstance(cause, QpInfeasibleError):
        names = run.log.row_names
        record["row"] = cause.row
        record["row_name"] = names[cause.row] if cause.row is not None and cause.row < len(names) else None
        record["violation"] = cause.violation
    if isinstance(cause, NonFiniteStateError):
        record["uav"] = cause.uav
    return record


def run_scenario(cfg: ScenarioConfig, progress_every: int = 200) -> SimLog:
    """Simulate a scenario from t_start to t_final.

    Raises:
        SimulationHalted: on QP infeasibility, a non-finite state or a
            degenerate attitude reference; carries the partial log whose
            ``halt`` entry describes the offending tick.
    """
    run = _Run(cfg, progress_every)
    K = cfg.n_ticks
    full = cfg.fidelity is Fidelity.FULL
    logger.info(
        "scenario_start", scenario=cfg.name, fidelity=cfg.fidelity.value,
        uavs=run.N, ticks=K + 1, dt_outer=cfg.dt_outer,
    )
    controller_on = False
    on_time = cfg.controller_on_time - 1e-9 * max(1.0, abs(cfg.controller_on_time))

    for k in range(K + 1):
        t = cfg.tick_time(k)
        ugvs = run._ugvs(t)
        pads = run._pads(ugvs)

        if t < on_time:
            run.pin_carried(ugvs)
            v = np.concatenate([s.velocity for s in run.states])
            run.record(k, t, False, ugvs, v, v, None)
            continue

        if not controller_on:
            # release point: carried UAVs leave their carrier from its current pose
            run.pin_carried(ugvs)
            logger.info("controller_on", time=round(t, 6), tick=k)
            controller_on = True

        try:
            run.detect_touchdowns(k, t, pads)
            u_nom, result = run.closed_loop(t, run.states)
            if full:
                run.record(k, t, True, ugvs, u_nom, result.u_star, result)
                if k < K:
                    run.advance_full(k, result.u_star)
            else:
                # logged velocity is the one applied over the coming period
                run.set_velocities(result.u_star)
                run.record(k, t, True, ugvs, u_nom, result.u_star, result)
                if k < K:
                    run.advance_kinematic(result.u_star)
        except CbfLandError as cause:
            run.log.halt = _halt_record(run, cause, k, t)
            logger.error("run_halted", scenario=cfg.name, tick=k, time=round(t, 6),
                         error=type(cause).__name__, detail=str(cause))
            raise SimulationHalted(cause, k, t, run.log) from cause

    run.progress.complete(f"{len(run.log.touchdowns)} touchdown(s)")
    logger.info(
        "scenario_complete", scenario=cfg.name, ticks=len(run.log),
        touchdowns=[(e.uav, round(e.time, 4)) for e in run.log.touchdowns],
    )
    return run.log


@dataclass
class SafetySummary:
    """Post-hoc safety figures of one run."""
    lcbf_initial: Dict[str, float] = field(default_factory=dict)
    lcbf_crossing_time: Dict[str, Optional[float]] = field(default_factory=dict)
    min_lcbf_after_crossing: Dict[str, Optional[float]] = field(default_factory=dict)
    min_scbf: Dict[str, float] = field(default_factory=dict)
    min_distance: Optional[float] = None
    touchdown_times: Dict[int, float] = field(default_factory=dict)
    max_deviation: float = 0.0
    sharing_ok_all: bool = True
    max_kkt_residual: float = 0.0
    max_ugv_speed: float = 0.0
    min_ugv_separation: Optional[float] = None
    first_breach: Optional[Dict[str, Any]] = None

    @property
    def worst_lcbf_after_crossing(self) -> Optional[float]:
        values = [v for v in self.min_lcbf_after_crossing.values() if v is not None]
        return min(values) if values else None

    @property
    def worst_scbf(self) -> Optional[float]:
        return min(self.min_scbf.values()) if self.min_scbf else None

    @property
    def last_touchdown(self) -> Optional[float]:
        return max(self.touchdown_times.values()) if self.touchdown_times else None

    def to_dict(self) -> Dict[str, Any]:
        return {
            "lcbf_initial": self.lcbf_initial,
            "lcbf_crossing_time": self.lcbf_crossing_time,
            "min_lcbf_after_crossing": self.worst_lcbf_after_crossing,
            "min_lcbf_after_crossing_by_uav": self.min_lcbf_after_crossing,
            "min_scbf": self.worst_scbf,
            "min_scbf_by_pair": self.min_scbf,
            "min_distance": self.min_distance,
            "touchdown_times": {str(k): v for k, v in sorted(self.touchdown_times.items())},
            "max_deviation": self.max_deviation,
            "sharing_ok_all": self.sharing_ok_all,
            "max_kkt_residual": self.max_kkt_residual,
            "max_ugv_speed": self.max_ugv_speed,
            "min_ugv_separation": self.min_ugv_separation,
            "first_breach": self.first_breach,
        }


def safety_metrics(log: SimLog, lcbf_tol: float = 1e-6, scbf_tol: float = 0.0) -> SafetySummary:
    """Minima, crossings, touchdowns and the first invariant breach of a log.

    A landing barrier is only checked after its first nonnegative value; a
    spherical barrier is checked over the whole run.
    """
    summary = SafetySummary(
        touchdown_times={e.uav: e.time for e in log.touchdowns},
    )
    if not log.ticks:
        return summary

    times = log.times
    H = log.stack("barriers")
    N = log.n_uavs
    breaches = []

    for col in range(N):
        name = log.row_names[col]
        h = H[:, col]
        summary.lcbf_initial[name] = float(h[0])
        crossed = np.flatnonzero(h >= 0.0)
        if crossed.size == 0:
            summary.lcbf_crossing_time[name] = None
            summary.min_lcbf_after_crossing[name] = None
            continue
        c = int(crossed[0])
        summary.lcbf_crossing_time[name] = float(times[c])
        summary.min_lcbf_after_crossing[name] = float(np.min(h[c:]))
        bad = np.flatnonzero(h[c:] < -lcbf_tol)
        if bad.size:
            breaches.append((c + int(bad[0]), name, float(h[c + bad[0]])))

    for col in range(N, H.shape[1]):
        name = log.row_names[col]
        h = H[:, col]
        summary.min_scbf[name] = float(np.min(h))
        bad = np.flatnonzero(h < -scbf_tol)
        if bad.size:
            breaches.append((int(bad[0]), name, float(h[bad[0]])))

    P = log.stack("positions")
    if N > 1:
        summary.min_distance = float(min(
            np.min(np.linalg.norm(P[:, i] - P[:, j], axis=1)) for i, j in combinations(range(N), 2)
        ))
        pads = log.stack("pad_positions")
        summary.min_ugv_separation = float(min(
            np.min(np.linalg.norm(pads[:, i] - pads[:, j], axis=1)) for i, j in combinations(range(N), 2)
        ))

    summary.max_deviation = float(max(r.deviation for r in log.ticks))
    summary.sharing_ok_all = all(r.sharing_ok for r in log.ticks)
    summary.max_kkt_residual = float(max(r.kkt_residual for r in log.ticks))
    summary.max_ugv_speed = float(np.max(np.linalg.norm(log.stack("pad_velocities"), axis=2)))

    if breaches:
        tick, name, value = min(breaches)
        summary.first_breach = {
            "tick": log.ticks[tick].tick,
            "time": float(times[tick]),
            "barrier": name,
            "value": value,
        }
    return summary
