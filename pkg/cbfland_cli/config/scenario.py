"""
Scenario Configuration

A scenario file is UTF-8 TOML: top-level timing keys, [gains], [filter],
one [[uav]] table per UAV, one [[ugv]] table per UGV and an optional
[inert] table. ``load_scenario`` parses it into a ScenarioConfig and checks
the invariants the safety filter relies on before any simulation starts.
"""

import math
import re
import sys
from enum import Enum
from itertools import combinations
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from ..core.barriers import D_TOL, LcbfParams, shaping_from_peak
from ..core.controllers import GainSet, ThrustModel
from ..core.errors import ScenarioError
from ..core.geometry import UavParams
from ..core.motion import MotionProgram, ProgramKind
from ..core.safety_filter import FilterConfig

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

SCENARIO_DIR = Path(__file__).resolve().parent.parent / "scenarios"

# Representative Pelican-class quadrotor, kg m^2
DEFAULT_INERTIA = [0.0347, 0.0458, 0.0977]

Vector = List[float]


class Fidelity(str, Enum):
    KINEMATIC = "kinematic"
    FULL = "full"

    @classmethod
    def parse(cls, value: Union[str, "Fidelity"]) -> "Fidelity":
        if isinstance(value, cls):
            return value
        text = str(value).strip().lower()
        if text == "full_dynamics":
            text = "full"
        return cls(text)


def _vec3(v: Sequence[float], name: str) -> List[float]:
    if len(v) != 3:
        raise ValueError(f"{name} must have 3 components, got {len(v)}")
    return [float(x) for x in v]


class GainsConfig(BaseModel):
    """Controller gains; scalars are applied to every axis and UAV."""
    model_config = ConfigDict(extra="forbid")

    kp: float = Field(default=2.0, gt=0, description="position gain, 1/s")
    kv: float = Field(default=2.0, gt=0, description="velocity gain, 1/s")
    k1: float = Field(default=0.5, gt=0, description="attitude error gain")
    k2: float = Field(default=0.5, gt=0, description="body-rate error gain")
    accel_feedforward: bool = Field(
        default=True, description="feed the change of u* across an outer period into the velocity loop",
    )


class FilterSection(BaseModel):
    model_config = ConfigDict(extra="forbid")

    rho_l: Union[float, List[float]] = Field(default=10.0, description="LCBF class-K gain(s)")
    rho_s: Union[float, List[float]] = Field(default=10.0, description="SCBF class-K gain(s)")
    sigma: float = Field(default=2.0, gt=0, description="input box bound, m/s")
    d_tol: float = Field(default=D_TOL, gt=0)
    qp_tol: float = Field(default=1e-8, gt=0)
    qp_max_iter: int = Field(default=500, gt=0)

    @field_validator("rho_l", "rho_s")
    @classmethod
    def validate_rho(cls, v):
        values = v if isinstance(v, list) else [v]
        if not values or any(x <= 0 for x in values):
            raise ValueError("class-K gains must be positive")
        return v


class UavConfig(BaseModel):
    """One UAV: physical parameters, barrier shape, carrier and landing target."""
    model_config = ConfigDict(extra="forbid")

    mass: float = Field(default=1.0, gt=0, description="kg")
    inertia: List[Any] = Field(default_factory=lambda: list(DEFAULT_INERTIA), validate_default=True,
                               description="diagonal (3 values) or full 3x3, kg m^2")
    radius: float = Field(default=0.25, gt=0, description="bounding sphere radius s_i, m")
    alpha: Optional[float] = Field(default=None, gt=0)
    beta: Optional[float] = Field(default=None, gt=0)
    peak_radius: Optional[float] = Field(default=None, gt=0, description="d* of the boundary peak")
    peak_height: Optional[float] = Field(default=None, gt=0, description="e_z* of the boundary peak")
    carrier: Optional[int] = Field(default=None, ge=1, description="UGV id carrying the UAV")
    target: int = Field(..., ge=1, description="UGV id of the landing pad")
    position: Optional[Vector] = Field(default=None, description="initial position when not carried")

    @field_validator("position")
    @classmethod
    def validate_position(cls, v):
        return None if v is None else _vec3(v, "position")

    @field_validator("inertia")
    @classmethod
    def validate_inertia(cls, v):
        J = np.asarray(v, dtype=float)
        if J.shape == (3,):
            J = np.diag(J)
        if J.shape != (3, 3):
            raise ValueError("inertia must be 3 diagonal values or a 3x3 matrix")
        if not np.allclose(J, J.T) or np.min(np.linalg.eigvalsh(J)) <= 0:
            raise ValueError("inertia must be symmetric positive definite")
        return J.tolist()

    @model_validator(mode="after")
    def resolve_shape(self):
        by_gain = self.alpha is not None or self.beta is not None
        by_peak = self.peak_radius is not None or self.peak_height is not None
        if by_gain and by_peak:
            raise ValueError("give either alpha/beta or peak_radius/peak_height, not both")
        if by_peak:
            if self.peak_radius is None or self.peak_height is None:
                raise ValueError("peak_radius and peak_height must be given together")
            shaped = shaping_from_peak(self.peak_radius, self.peak_height)
            self.alpha, self.beta = shaped.alpha, shaped.beta
        else:
            self.alpha = 2.0 if self.alpha is None else self.alpha
            self.beta = 1.0 if self.beta is None else self.beta
        if self.carrier is None and self.position is None:
            raise ValueError("a UAV without a carrier needs an initial position")
        return self

    def params(self) -> UavParams:
        return UavParams(mass=self.mass, inertia=np.asarray(self.inertia), radius=self.radius)

    def lcbf(self) -> LcbfParams:
        return LcbfParams(alpha=self.alpha, beta=self.beta)


class UgvConfig(BaseModel):
    """Initial pad position and velocity program of one UGV."""
    model_config = ConfigDict(extra="forbid")

    position: Vector
    program: ProgramKind = ProgramKind.STATIC
    offset: Vector = Field(default_factory=lambda: [0.0, 0.0, 0.0])
    amplitude: Vector = Field(default_factory=lambda: [0.0, 0.0, 0.0])
    omega: float = Field(default=0.0, description="rad/s")
    phase: float = Field(default=0.0, description="rad")
    breakpoints: List[float] = Field(default_factory=list)
    velocities: List[Vector] = Field(default_factory=list)

    @field_validator("position", "offset", "amplitude")
    @classmethod
    def validate_vectors(cls, v, info):
        return _vec3(v, info.field_name)

    @field_validator("velocities")
    @classmethod
    def validate_velocities(cls, v):
        return [_vec3(x, "velocity") for x in v]

    @model_validator(mode="after")
    def check_program(self):
        if self.program is ProgramKind.PIECEWISE:
            if not self.breakpoints:
                raise ValueError("piecewise program needs breakpoints")
            if len(self.breakpoints) != len(self.velocities):
                raise ValueError("piecewise program needs one velocity per breakpoint")
        return self

    def motion(self, t0: float) -> MotionProgram:
        return MotionProgram(
            kind=self.program,
            p0=self.position,
            t0=t0,
            offset=self.offset,
            amplitude=self.amplitude,
            omega=self.omega,
            phase=self.phase,
            breakpoints=tuple(self.breakpoints),
            velocities=np.asarray(self.velocities, dtype=float).reshape(-1, 3),
        )


class InertConfig(BaseModel):
    """Recorded with the run but not used by any controller."""
    model_config = ConfigDict(extra="allow")

    a: Optional[float] = None
    b: Optional[float] = None
    m: Optional[float] = None


class ScenarioConfig(BaseModel):
    """Complete description of one landing scenario."""
    model_config = ConfigDict(extra="forbid")

    name: str = Field(default="scenario")
    fidelity: Fidelity = Field(default=Fidelity.KINEMATIC)
    t_start: float = Field(default=0.0, description="s; pre-roll before controller_on_time")
    controller_on_time: float = Field(default=0.0)
    t_final: float = Field(default=20.0)
    dt_outer: float = Field(default=0.01, gt=0, description="QP and position loop period")
    dt_inner: float = Field(default=0.001, gt=0, description="attitude loop and integration period")
    landing_tolerance: float = Field(default=0.02, gt=0, description="m")
    psi_d: float = Field(default=0.0, description="desired yaw, rad")
    thrust_model: ThrustModel = Field(default=ThrustModel.VECTOR)
    breach_tolerance: Optional[float] = Field(default=None, ge=0)
    gains: GainsConfig = Field(default_factory=GainsConfig)
    filter: FilterSection = Field(default_factory=FilterSection)
    uav: List[UavConfig] = Field(..., min_length=1)
    ugv: List[UgvConfig] = Field(..., min_length=1)
    inert: InertConfig = Field(default_factory=InertConfig)
    source: Optional[str] = Field(default=None, exclude=True)

    @field_validator("fidelity", mode="before")
    @classmethod
    def parse_fidelity(cls, v):
        return Fidelity.parse(v)

    @property
    def n_uavs(self) -> int:
        return len(self.uav)

    @property
    def n_ticks(self) -> int:
        """Number of outer intervals between t_start and t_final."""
        return int(round((self.t_final - self.t_start) / self.dt_outer))

    @property
    def inner_steps(self) -> int:
        return max(1, int(round(self.dt_outer / self.dt_inner)))

    def tick_time(self, k: int) -> float:
        return self.t_start + k * self.dt_outer

    def programs(self) -> List[MotionProgram]:
        return [g.motion(self.t_start) for g in self.ugv]

    def target_programs(self) -> List[MotionProgram]:
        programs = self.programs()
        return [programs[u.target - 1] for u in self.uav]

    def filter_config(self) -> FilterConfig:
        f = self.filter
        return FilterConfig(
            rho_l=f.rho_l, rho_s=f.rho_s, sigma=f.sigma,
            d_tol=f.d_tol, qp_tol=f.qp_tol, qp_max_iter=f.qp_max_iter,
        )

    def gain_set(self) -> GainSet:
        g = self.gains
        return GainSet.uniform(self.n_uavs, g.kp, g.kv, g.k1, g.k2)

    def uav_params(self) -> List[UavParams]:
        return [u.params() for u in self.uav]

    def lcbf_params(self) -> List[LcbfParams]:
        return [u.lcbf() for u in self.uav]

    def radii(self) -> List[float]:
        return [u.radius for u in self.uav]

    def effective_breach_tolerance(self) -> Tuple[float, float]:
        """(post-crossing LCBF tolerance, SCBF tolerance)."""
        if self.breach_tolerance is not None:
            return self.breach_tolerance, self.breach_tolerance
        if self.fidelity is Fidelity.FULL:
            return 0.05, 0.05
        return 1e-6, 0.0


def with_overrides(cfg: ScenarioConfig, **overrides: Any) -> ScenarioConfig:
    """Copy of cfg with sweep parameters replaced and re-validated.

    Recognised keys: alpha, beta (every UAV), rho (both gains), rho_l, rho_s,
    sigma, fidelity.
    """
    data = cfg.model_dump(mode="python")
    data["source"] = cfg.source
    for uav in data["uav"]:
        # alpha/beta already hold the values derived from the peak
        uav["peak_radius"] = uav["peak_height"] = None
    for key, value in overrides.items():
        if value is None:
            continue
        if key in ("alpha", "beta"):
            for uav in data["uav"]:
                uav[key] = float(value)
        elif key == "rho":
            data["filter"]["rho_l"] = data["filter"]["rho_s"] = float(value)
        elif key in ("rho_l", "rho_s", "sigma"):
            data["filter"][key] = float(value)
        elif key == "fidelity":
            data["fidelity"] = Fidelity.parse(value)
        else:
            raise ValueError(f"unknown override {key!r}")
    return ScenarioConfig.model_validate(data)


def _invariant_grid(cfg: ScenarioConfig) -> np.ndarray:
    return cfg.t_start + cfg.dt_outer * np.arange(cfg.n_ticks + 1)


def check_invariants(cfg: ScenarioConfig) -> List[str]:
    """Return the list of violated scenario invariants (empty when valid)."""
    issues: List[str] = []

    if cfg.dt_inner > cfg.dt_outer:
        issues.append(f"dt_inner ({cfg.dt_inner}) must not exceed dt_outer ({cfg.dt_outer})")
    else:
        ratio = cfg.dt_outer / cfg.dt_inner
        if abs(ratio - round(ratio)) > 1e-9 * ratio:
            issues.append(f"dt_inner ({cfg.dt_inner}) must divide dt_outer ({cfg.dt_outer})")
    if cfg.t_final <= cfg.t_start:
        issues.append(f"t_final ({cfg.t_final}) must be after t_start ({cfg.t_start})")
    if not cfg.t_start <= cfg.controller_on_time <= cfg.t_final:
        issues.append("controller_on_time must lie within [t_start, t_final]")
    span = (cfg.t_final - cfg.t_start) / cfg.dt_outer
    if abs(span - round(span)) > 1e-6:
        issues.append("t_final - t_start must be a whole number of dt_outer periods")

    n_ugv = len(cfg.ugv)
    targets = [u.target for u in cfg.uav]
    for i, u in enumerate(cfg.uav, start=1):
        if u.target > n_ugv:
            issues.append(f"UAV {i}: target UGV {u.target} does not exist ({n_ugv} UGVs)")
        if u.carrier is not None and u.carrier > n_ugv:
            issues.append(f"UAV {i}: carrier UGV {u.carrier} does not exist ({n_ugv} UGVs)")
    if len(set(targets)) != len(targets):
        issues.append(f"landing targets must be distinct, got {targets}")

    f = cfg.filter
    for name, values, expected in (
        ("rho_l", f.rho_l, cfg.n_uavs),
        ("rho_s", f.rho_s, cfg.n_uavs * (cfg.n_uavs - 1) // 2),
    ):
        if isinstance(values, list) and len(values) != expected:
            issues.append(f"filter.{name} has {len(values)} entries, expected {expected}")

    if issues:
        return issues

    grid = _invariant_grid(cfg)
    pads = cfg.target_programs()

    max_speed = max(np.linalg.norm(p.velocity(t)) for p in pads for t in grid)
    if not max_speed < f.sigma:
        issues.append(
            f"Assumption 1 (UGV speed below sigma): max pad speed {max_speed:.4f} m/s "
            f">= sigma {f.sigma} m/s"
        )

    if cfg.n_uavs > 1:
        clearance = max(a.radius + b.radius for a, b in combinations(cfg.uav, 2))
        min_sep = math.inf
        for t in grid:
            positions = [p.position(t) for p in pads]
            for a, b in combinations(positions, 2):
                min_sep = min(min_sep, float(np.linalg.norm(a - b)))
        if not min_sep > clearance:
            issues.append(
                f"Assumption 2 (UGV separation): min pad separation {min_sep:.4f} m "
                f"<= max(s_m + s_n) = {clearance:.4f} m"
            )

    return issues


_HEADER = re.compile(r"^\s*(\[\[?)\s*([A-Za-z0-9_.]+)\s*\]\]?")
_KEY = re.compile(r"^\s*([A-Za-z0-9_.]+)\s*=")


def _locate(text: str, loc: Tuple[Any, ...]) -> Optional[int]:
    """Line (1-based) defining the key at a pydantic error location."""
    parts = [p for p in loc if not isinstance(p, int)]
    index = next((p for p in loc if isinstance(p, int)), None)
    if not parts:
        return None
    if len(parts) > 1:
        table, key = parts[0], parts[-1]
    elif index is not None:
        # error on a whole array-of-tables entry: point at its header
        table, key = parts[0], None
    else:
        table, key = None, parts[0]

    current, counts, header_line = None, {}, None
    for lineno, line in enumerate(text.splitlines(), start=1):
        header = _HEADER.match(line)
        if header:
            current = header.group(2)
            counts[current] = counts.get(current, -1) + 1
            if table is not None and current == table and (index is None or counts[current] == index):
                header_line = lineno
            continue
        match = _KEY.match(line)
        if not match:
            continue
        name = match.group(1)
        if table is None and current is None and name == key:
            return lineno
        if table is not None:
            in_table = current == table and (index is None or counts.get(current) == index)
            if in_table and name == key:
                return lineno
            if current is None and name == f"{table}.{key}":
                return lineno
    return header_line


def scenario_from_dict(data: Dict[str, Any], source: Optional[str] = None,
                       check: bool = True, text: str = "") -> ScenarioConfig:
    """Validate a parsed scenario mapping; raises ScenarioError."""
    try:
        cfg = ScenarioConfig.model_validate({**data, "source": source})
    except ValidationError as e:
        first = e.errors()[0]
        key = ".".join(str(p) for p in first["loc"])
        issues = [f"{'.'.join(str(p) for p in err['loc'])}: {err['msg']}" for err in e.errors()]
        raise ScenarioError(
            f"invalid value for {key}: {first['msg']}",
            path=source, line=_locate(text, tuple(first["loc"])) if text else None, issues=issues,
        ) from e

    if check:
        issues = check_invariants(cfg)
        if issues:
            raise ScenarioError(
                f"scenario violates {len(issues)} invariant(s): " + "; ".join(issues),
                path=source, issues=issues,
            )
    return cfg


def resolve_scenario_path(path: Union[str, Path]) -> Path:
    """Existing path as given, else a bundled scenario of that name."""
    candidate = Path(path)
    if candidate.exists():
        return candidate
    for name in (candidate.name, f"{candidate.name}.cfg"):
        bundled = SCENARIO_DIR / name
        if bundled.exists():
            return bundled
    return candidate


def load_scenario(path: Union[str, Path], check: bool = True) -> ScenarioConfig:
    """Read, parse and validate a scenario file.

    Raises:
        ScenarioError: with file and line context for I/O, syntax and
            field errors, and the list of violated invariants otherwise.
    """
    resolved = resolve_scenario_path(path)
    source = str(resolved)
    try:
        text = resolved.read_bytes().decode("utf-8")
    except FileNotFoundError:
        raise ScenarioError("scenario file not found", path=source)
    except UnicodeDecodeError as e:
        raise ScenarioError(f"scenario file is not UTF-8 ({e.reason})", path=source)
    except OSError as e:
        raise ScenarioError(f"cannot read scenario file: {e.strerror}", path=source)

    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as e:
        match = re.search(r"line (\d+)", str(e))
        line = getattr(e, "lineno", None) or (int(match.group(1)) if match else None)
        raise ScenarioError(f"syntax error: {e}", path=source, line=line)

    return scenario_from_dict(data, source=source, check=check, text=text)
