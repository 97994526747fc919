#!/usr/bin/env python3
"""
cbfland Run Pipeline

Orchestrates one scenario run end to end:
load scenario → apply overrides → simulate → safety metrics → result files

and parameter sweeps over a grid of barrier and filter gains, one run per
grid cell, executed concurrently.

Every failure is converted into a result dictionary; nothing below the CLI
decides exit codes on its own.
"""

import itertools
from concurrent.futures import ThreadPoolExecutor
from enum import Enum
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Union

from ..config.loader import CbfLandSettings
from ..config.scenario import ScenarioConfig, check_invariants, load_scenario, with_overrides
from ..logs.logger import ProgressLogger, get_logger, performance_timer
from .barriers import peak_boundary_height
from .errors import ScenarioError, SimulationHalted
from .export import export_run, write_sweep_summary
from .simulator import SafetySummary, SimLog, run_scenario, safety_metrics

logger = get_logger(__name__)

GRID_KEYS = ("alpha", "beta", "rho", "rho_l", "rho_s", "sigma")

SWEEP_COLUMNS = [
    "cell", "alpha", "beta", "rho_l", "rho_s", "sigma", "status", "last_touchdown",
    "min_lcbf_after_crossing", "min_scbf", "min_distance", "max_deviation", "peak_boundary_height",
]


class RunStatus(Enum):
    """Outcome of one run."""
    COMPLETED = "completed"
    BREACH = "breach"
    HALTED = "halted"
    ERROR = "error"


EXIT_CODES = {
    RunStatus.COMPLETED: 0,
    RunStatus.ERROR: 1,
    RunStatus.HALTED: 3,
    RunStatus.BREACH: 4,
}


def build_metrics(
    cfg: ScenarioConfig,
    log: SimLog,
    summary: SafetySummary,
    status: RunStatus,
) -> Dict[str, Any]:
    """Contents of metrics.json. Holds no wall-clock data so reruns are identical."""
    lcbf_tol, scbf_tol = cfg.effective_breach_tolerance()
    lcbf = cfg.lcbf_params()
    metrics: Dict[str, Any] = {
        "scenario": cfg.name,
        "source": cfg.source,
        "fidelity": cfg.fidelity.value,
        "status": status.value,
        "n_uavs": cfg.n_uavs,
        "ticks": len(log),
        "t_start": cfg.t_start,
        "controller_on_time": cfg.controller_on_time,
        "t_final": cfg.t_final,
        "dt_outer": cfg.dt_outer,
        "dt_inner": cfg.dt_inner,
        "tolerances": {"lcbf_after_crossing": lcbf_tol, "scbf": scbf_tol},
        "touchdowns": [
            {"uav": e.uav, "target": e.target, "tick": e.tick, "time": e.time}
            for e in log.touchdowns
        ],
        "all_landed": len(log.touchdowns) == cfg.n_uavs,
        "lcbf_shape": [
            {"uav": i, "alpha": p.alpha, "beta": p.beta, "peak_boundary_height": peak_boundary_height(p)}
            for i, p in enumerate(lcbf, start=1)
        ],
        "inert": cfg.inert.model_dump(),
        "halt": log.halt,
    }
    metrics.update(summary.to_dict())
    return metrics


class RunPipeline:
    """Scenario run orchestrator."""

    def __init__(self,
                 settings: Optional[CbfLandSettings] = None,
                 progress_callback: Optional[Callable[[str, float], None]] = None):
        """
        Initialize the run pipeline.

        Args:
            settings: Application settings; defaults are used when omitted
            progress_callback: Optional callback for progress updates
        """
        self.settings = settings or CbfLandSettings()
        self.progress_callback = progress_callback
        self.logger = logger

    def run(self,
            scenario: Union[str, Path, ScenarioConfig],
            out_dir: Path,
            fidelity: Optional[str] = None,
            overrides: Optional[Dict[str, Any]] = None) -> Dict[str, Any]:
        """
        Simulate one scenario and write its result files.

        Args:
            scenario: Scenario file path, bundled scenario name or loaded config
            out_dir: Directory for states.csv, barriers.csv, inputs.csv, metrics.json
            fidelity: Optional fidelity override
            overrides: Optional sweep overrides (alpha, beta, rho, rho_l, rho_s, sigma)

        Returns:
            Dict with status, exit_code, metrics, files and, on failure, error or halt
        """
        out_dir = Path(out_dir)
        try:
            self._update_progress("Loading scenario", 0)
            cfg = self._prepare(scenario, fidelity, overrides)
        except (ScenarioError, ValueError) as e:
            self.logger.error("scenario_rejected", error=str(e))
            return self._error_result(e)

        self.logger.info("run_start", scenario=cfg.name, fidelity=cfg.fidelity.value, out=str(out_dir))
        self._update_progress(f"Simulating {cfg.name}", 10)

        halt: Optional[SimulationHalted] = None
        with performance_timer(f"run {cfg.name}", self.logger) as timing:
            try:
                log = run_scenario(cfg, progress_every=self.settings.simulation.progress_every)
            except SimulationHalted as e:
                halt = e
                log = e.log

        lcbf_tol, scbf_tol = cfg.effective_breach_tolerance()
        summary = safety_metrics(log, lcbf_tol=lcbf_tol, scbf_tol=scbf_tol)
        if halt is not None:
            status = RunStatus.HALTED
        elif summary.first_breach is not None:
            status = RunStatus.BREACH
            self.logger.warning("invariant_breach", scenario=cfg.name, **summary.first_breach)
        else:
            status = RunStatus.COMPLETED

        metrics = build_metrics(cfg, log, summary, status)

        self._update_progress("Writing result files", 90)
        out = self.settings.output
        try:
            files = export_run(
                log, out_dir, metrics,
                float_format=out.float_format,
                write_attitude=out.write_attitude,
                write_margins=out.write_margins,
                write_landing_errors=out.write_landing_errors,
            )
        except OSError as e:
            self.logger.error("export_failed", out=str(out_dir), error=str(e))
            return self._error_result(e, config=cfg)

        self._update_progress("Run finished", 100)
        self.logger.info("run_finished", scenario=cfg.name, status=status.value,
                         elapsed_s=round(timing.get("elapsed_s", 0.0), 3))
        return {
            "status": status.value,
            "exit_code": EXIT_CODES[status],
            "config": cfg,
            "log": log,
            "summary": summary,
            "metrics": metrics,
            "files": {k: str(v) for k, v in files.items()},
            "halt": log.halt,
            "breach": summary.first_breach,
            "elapsed_s": timing.get("elapsed_s"),
        }

    def _prepare(self,
                 scenario: Union[str, Path, ScenarioConfig],
                 fidelity: Optional[str],
                 overrides: Optional[Dict[str, Any]]) -> ScenarioConfig:
        cfg = scenario if isinstance(scenario, ScenarioConfig) else load_scenario(scenario)
        changes = dict(overrides or {})
        if fidelity is not None:
            changes["fidelity"] = fidelity
        if not changes:
            return cfg
        cfg = with_overrides(cfg, **changes)
        issues = check_invariants(cfg)
        if issues:
            raise ScenarioError(
                f"scenario violates {len(issues)} invariant(s): " + "; ".join(issues),
                path=cfg.source, issues=issues,
            )
        return cfg

    def _error_result(self, error: Exception, config: Optional[ScenarioConfig] = None) -> Dict[str, Any]:
        return {
            "status": RunStatus.ERROR.value,
            "exit_code": EXIT_CODES[RunStatus.ERROR],
            "config": config,
            "error": str(error),
            "issues": list(getattr(error, "issues", []) or []),
            "files": {},
        }

    def _update_progress(self, message: str, percentage: float):
        """Update progress via callback."""
        if self.progress_callback:
            self.progress_callback(message, percentage)


def parse_grid(spec: str) -> List[Dict[str, float]]:
    """Cartesian product of a grid spec such as ``alpha=1,2,4;beta=1;rho=10``.

    An empty spec yields no cells.

    Raises:
        ValueError: on unknown keys, repeated keys or non-numeric values.
    """
    axes: Dict[str, List[float]] = {}
    for part in spec.split(";"):
        part = part.strip()
        if not part:
            continue
        if "=" not in part:
            raise ValueError(f"grid entry {part!r} is not key=values")
        key, _, values = part.partition("=")
        key = key.strip().lower()
        if key not in GRID_KEYS:
            raise ValueError(f"unknown grid key {key!r}; expected one of {', '.join(GRID_KEYS)}")
        if key in axes:
            raise ValueError(f"grid key {key!r} given twice")
        try:
            axes[key] = [float(v) for v in values.split(",") if v.strip()]
        except ValueError:
            raise ValueError(f"grid key {key!r} has a non-numeric value in {values!r}")
        if not axes[key]:
            raise ValueError(f"grid key {key!r} has no values")
    if not axes:
        return []
    keys = list(axes)
    return [dict(zip(keys, combo)) for combo in itertools.product(*(axes[k] for k in keys))]


def _summary_row(index: int, cell: Dict[str, float], result: Dict[str, Any]) -> Dict[str, Any]:
    cfg: Optional[ScenarioConfig] = result.get("config")
    row: Dict[str, Any] = {name: None for name in SWEEP_COLUMNS}
    row["cell"] = index
    row["status"] = result["status"]
    if cfg is not None:
        lcbf = cfg.lcbf_params()
        f = cfg.filter
        row.update(
            alpha=lcbf[0].alpha,
            beta=lcbf[0].beta,
            rho_l=f.rho_l if not isinstance(f.rho_l, list) else None,
            rho_s=f.rho_s if not isinstance(f.rho_s, list) else None,
            sigma=f.sigma,
            peak_boundary_height=max(peak_boundary_height(p) for p in lcbf),
        )
    else:
        row.update({k: v for k, v in cell.items() if k in row})
        if "rho" in cell:
            row["rho_l"] = row["rho_s"] = cell["rho"]
    summary: Optional[SafetySummary] = result.get("summary")
    if summary is not None:
        row.update(
            last_touchdown=summary.last_touchdown,
            min_lcbf_after_crossing=summary.worst_lcbf_after_crossing,
            min_scbf=summary.worst_scbf,
            min_distance=summary.min_distance,
            max_deviation=summary.max_deviation,
        )
    return row


def run_sweep(scenario: Union[str, Path],
              grid: Union[str, List[Dict[str, float]]],
              out_dir: Path,
              settings: Optional[CbfLandSettings] = None,
              fidelity: Optional[str] = None,
              max_workers: Optional[int] = None) -> Dict[str, Any]:
    """Run one scenario per grid cell and write summary.csv.

    Each cell writes into ``out_dir/cell_NNN``. A failing cell is recorded
    with its status and the sweep carries on.
    """
    settings = settings or CbfLandSettings()
    out_dir = Path(out_dir)
    cells = parse_grid(grid) if isinstance(grid, str) else list(grid)

    try:
        base = load_scenario(scenario)
    except ScenarioError as e:
        logger.error("sweep_scenario_rejected", error=str(e))
        return {"status": RunStatus.ERROR.value, "exit_code": 1, "error": str(e),
                "issues": e.issues, "rows": [], "summary_file": None}

    workers = max_workers or settings.sweep.max_workers
    progress = ProgressLogger(max(len(cells), 1), f"sweep {base.name}")
    logger.info("sweep_start", scenario=base.name, cells=len(cells), workers=workers)

    def run_cell(index: int, cell: Dict[str, float]) -> Dict[str, Any]:
        pipeline = RunPipeline(settings)
        try:
            result = pipeline.run(base, out_dir / f"cell_{index:03d}", fidelity=fidelity, overrides=cell)
        except Exception as e:
            logger.error("sweep_cell_failed", cell=index, error=str(e), exc_info=True)
            result = {"status": RunStatus.ERROR.value, "error": str(e)}
        progress.step(cell=index, status=result["status"])
        return _summary_row(index, cell, result)

    with performance_timer(f"sweep {base.name}", logger):
        with ThreadPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(run_cell, range(len(cells)), cells))

    summary_file = write_sweep_summary(rows, out_dir / "summary.csv", SWEEP_COLUMNS,
                                       settings.output.float_format)
    progress.complete(f"{len(rows)} cell(s)")
    failed = [r["cell"] for r in rows if r["status"] != RunStatus.COMPLETED.value]
    return {
        "status": RunStatus.COMPLETED.value,
        "exit_code": 0,
        "rows": rows,
        "failed_cells": failed,
        "summary_file": str(summary_file),
    }


def run(scenario: Union[str, Path], out_dir: Path, fidelity: Optional[str] = None,
        settings: Optional[CbfLandSettings] = None,
        progress_callback: Optional[Callable[[str, float], None]] = None) -> Dict[str, Any]:
    """Convenience function to run one scenario."""
    return RunPipeline(settings, progress_callback).run(scenario, out_dir, fidelity=fidelity)
