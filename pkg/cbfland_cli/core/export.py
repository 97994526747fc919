"""Result files of a run.

CSV headers are fixed:

    states.csv          time,uav_id,px,py,pz,vx,vy,vz
    barriers.csv        time,name,value
    inputs.csv          time,uav_id,u_nom_x,u_nom_y,u_nom_z,u_star_x,u_star_y,u_star_z
    landing_errors.csv  time,uav_id,ex,ey,ez,d
    attitude.csv        time,uav_id,roll,pitch,yaw,wx,wy,wz
    margins.csv         time,row,name,margin,active

Floats are written with 17 significant digits so re-reading them is exact.
"""

import csv
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, Iterable, List, Sequence, Tuple

import numpy as np

from ..config.scenario import ScenarioConfig
from .geometry import euler_angles
from .motion import ugv_state_at
from .simulator import SimLog, barrier_values

STATES_HEADER = ["time", "uav_id", "px", "py", "pz", "vx", "vy", "vz"]
BARRIERS_HEADER = ["time", "name", "value"]
INPUTS_HEADER = ["time", "uav_id", "u_nom_x", "u_nom_y", "u_nom_z", "u_star_x", "u_star_y", "u_star_z"]
LANDING_ERRORS_HEADER = ["time", "uav_id", "ex", "ey", "ez", "d"]
ATTITUDE_HEADER = ["time", "uav_id", "roll", "pitch", "yaw", "wx", "wy", "wz"]
MARGINS_HEADER = ["time", "row", "name", "margin", "active"]

DEFAULT_FLOAT_FORMAT = ".17g"


class _Writer:
    """csv.writer with a fixed float format."""

    def __init__(self, handle, float_format: str):
        self._writer = csv.writer(handle, lineterminator="\n")
        self._fmt = float_format

    def header(self, names: Sequence[str]) -> None:
        self._writer.writerow(names)

    def row(self, *values: Any) -> None:
        self._writer.writerow([
            format(float(v), self._fmt) if isinstance(v, (float, np.floating)) else v
            for v in values
        ])


def _open(path: Path):
    path.parent.mkdir(parents=True, exist_ok=True)
    return open(path, "w", encoding="utf-8", newline="")


def write_states_csv(log: SimLog, path: Path, float_format: str = DEFAULT_FLOAT_FORMAT) -> Path:
    with _open(path) as f:
        w = _Writer(f, float_format)
        w.header(STATES_HEADER)
        for r in log.ticks:
            for i in range(log.n_uavs):
                w.row(r.time, i + 1, *r.positions[i], *r.velocities[i])
    return path


def write_barriers_csv(log: SimLog, path: Path, float_format: str = DEFAULT_FLOAT_FORMAT) -> Path:
    with _open(path) as f:
        w = _Writer(f, float_format)
        w.header(BARRIERS_HEADER)
        for r in log.ticks:
            for name, value in zip(log.row_names, r.barriers):
                w.row(r.time, name, value)
    return path


def write_inputs_csv(log: SimLog, path: Path, float_format: str = DEFAULT_FLOAT_FORMAT) -> Path:
    with _open(path) as f:
        w = _Writer(f, float_format)
        w.header(INPUTS_HEADER)
        for r in log.ticks:
            for i in range(log.n_uavs):
                w.row(r.time, i + 1, *r.u_nom[3 * i:3 * i + 3], *r.u_star[3 * i:3 * i + 3])
    return path


def write_landing_errors_csv(log: SimLog, path: Path, float_format: str = DEFAULT_FLOAT_FORMAT) -> Path:
    """Position of each UAV in its pad frame, e = p - p_d, and d = |e_xy|."""
    with _open(path) as f:
        w = _Writer(f, float_format)
        w.header(LANDING_ERRORS_HEADER)
        for r in log.ticks:
            for i in range(log.n_uavs):
                e = r.positions[i] - r.pad_positions[i]
                w.row(r.time, i + 1, *e, math.hypot(e[0], e[1]))
    return path


def write_attitude_csv(log: SimLog, path: Path, float_format: str = DEFAULT_FLOAT_FORMAT) -> Path:
    with _open(path) as f:
        w = _Writer(f, float_format)
        w.header(ATTITUDE_HEADER)
        for r in log.ticks:
            for i in range(log.n_uavs):
                w.row(r.time, i + 1, *euler_angles(r.attitudes[i]), *r.body_rates[i])
    return path


def write_margins_csv(log: SimLog, path: Path, float_format: str = DEFAULT_FLOAT_FORMAT) -> Path:
    """A u* + b per QP row; ticks before the controller starts are skipped."""
    with _open(path) as f:
        w = _Writer(f, float_format)
        w.header(MARGINS_HEADER)
        for r in log.ticks:
            if not r.controller_on:
                continue
            for row, name in enumerate(log.row_names):
                w.row(r.time, row + 1, name, r.margins[row], int(bool(r.active[row])))
    return path


def _clean(value: Any) -> Any:
    """JSON-safe copy: numpy scalars to Python, non-finite floats to None."""
    if isinstance(value, dict):
        return {str(k): _clean(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_clean(v) for v in value]
    if isinstance(value, np.ndarray):
        return _clean(value.tolist())
    if isinstance(value, (np.integer,)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        return float(value) if math.isfinite(value) else None
    if isinstance(value, np.bool_):
        return bool(value)
    return value


def write_metrics_json(metrics: Dict[str, Any], path: Path) -> Path:
    with _open(path) as f:
        json.dump(_clean(metrics), f, indent=2)
        f.write("\n")
    return path


def export_run(
    log: SimLog,
    out_dir: Path,
    metrics: Dict[str, Any],
    float_format: str = DEFAULT_FLOAT_FORMAT,
    write_attitude: bool = True,
    write_margins: bool = True,
    write_landing_errors: bool = True,
) -> Dict[str, Path]:
    """Write every result file of a run into out_dir."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    files = {
        "states": write_states_csv(log, out_dir / "states.csv", float_format),
        "barriers": write_barriers_csv(log, out_dir / "barriers.csv", float_format),
        "inputs": write_inputs_csv(log, out_dir / "inputs.csv", float_format),
    }
    if write_landing_errors:
        files["landing_errors"] = write_landing_errors_csv(log, out_dir / "landing_errors.csv", float_format)
    if write_attitude and log.fidelity == "full":
        files["attitude"] = write_attitude_csv(log, out_dir / "attitude.csv", float_format)
    if write_margins:
        files["margins"] = write_margins_csv(log, out_dir / "margins.csv", float_format)
    files["metrics"] = write_metrics_json(metrics, out_dir / "metrics.json")
    return files


def write_sweep_summary(
    rows: Sequence[Dict[str, Any]],
    path: Path,
    columns: Sequence[str],
    float_format: str = DEFAULT_FLOAT_FORMAT,
) -> Path:
    """One line per sweep cell; missing values are left empty."""
    with _open(path) as f:
        w = _Writer(f, float_format)
        w.header(columns)
        for row in sorted(rows, key=lambda r: r["cell"]):
            w.row(*("" if row.get(c) is None else row[c] for c in columns))
    return path


@dataclass
class StatesTable:
    """states.csv read back: times (T,), positions and velocities (T, N, 3)."""
    times: np.ndarray
    positions: np.ndarray
    velocities: np.ndarray


def _read_rows(path: Path, header: Sequence[str]) -> Iterable[List[str]]:
    with open(path, "r", encoding="utf-8", newline="") as f:
        reader = csv.reader(f)
        found = next(reader, None)
        if found != list(header):
            raise ValueError(f"{path}: expected header {','.join(header)}, found {found}")
        yield from reader


def read_states_csv(path: Path) -> StatesTable:
    rows = list(_read_rows(Path(path), STATES_HEADER))
    if not rows:
        return StatesTable(np.empty(0), np.empty((0, 0, 3)), np.empty((0, 0, 3)))
    n_uavs = max(int(r[1]) for r in rows)
    if len(rows) % n_uavs:
        raise ValueError(f"{path}: {len(rows)} rows is not a multiple of {n_uavs} UAVs")
    data = np.array([[float(x) for x in (r[0], *r[2:])] for r in rows])
    T = len(rows) // n_uavs
    data = data.reshape(T, n_uavs, 7)
    return StatesTable(times=data[:, 0, 0], positions=data[:, :, 1:4], velocities=data[:, :, 4:7])


def read_barriers_csv(path: Path) -> Tuple[np.ndarray, List[str], np.ndarray]:
    """(times (T,), row names, values (T, Q))."""
    rows = list(_read_rows(Path(path), BARRIERS_HEADER))
    names: List[str] = []
    for r in rows:
        if r[1] in names:
            break
        names.append(r[1])
    Q = len(names)
    if Q == 0:
        return np.empty(0), names, np.empty((0, 0))
    values = np.array([float(r[2]) for r in rows]).reshape(-1, Q)
    times = np.array([float(r[0]) for r in rows[::Q]])
    return times, names, values


def recompute_barriers(states: StatesTable, cfg: ScenarioConfig) -> np.ndarray:
    """Barrier values (T, Q) from re-read states and the scenario's pad programs."""
    programs = cfg.target_programs()
    out = []
    for t, P in zip(states.times, states.positions):
        pads = np.stack([ugv_state_at(p, float(t)).position for p in programs])
        out.append(barrier_values(P, pads, cfg))
    return np.array(out)
