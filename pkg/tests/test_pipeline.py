#!/usr/bin/env python3
"""
Unit Tests for the Run Pipeline and Parameter Sweeps
"""

import json
from pathlib import Path

import pytest

from cbfland_cli.core.pipeline import (
    SWEEP_COLUMNS,
    RunPipeline,
    RunStatus,
    parse_grid,
    run,
    run_sweep,
)

PAIR_TEMPLATE = """\
name = "pair"
t_start = 0.0
controller_on_time = 0.0
t_final = 0.5

[[uav]]
target = 1
position = [0.0, 0.0, 1.0]

[[uav]]
target = 2
position = [{gap}, 0.0, 1.0]

[[ugv]]
position = [-2.0, 0.0, 0.1]

[[ugv]]
position = [2.0, 0.0, 0.1]
"""


class TestParseGrid:
    """Test cases for sweep grid specs."""

    def test_cartesian_product(self):
        cells = parse_grid("alpha=1,2; beta=0.5")
        assert cells == [{"alpha": 1.0, "beta": 0.5}, {"alpha": 2.0, "beta": 0.5}]

    def test_keys_are_case_insensitive(self):
        assert parse_grid("RHO=10") == [{"rho": 10.0}]

    def test_empty_spec_has_no_cells(self):
        assert parse_grid("") == []
        assert parse_grid(" ; ") == []

    @pytest.mark.parametrize("spec,message", [
        ("gamma=1", "unknown grid key"),
        ("alpha=1;alpha=2", "given twice"),
        ("beta=1,x", "non-numeric"),
        ("sigma", "not key=values"),
        ("sigma=", "no values"),
    ])
    def test_invalid_specs(self, spec, message):
        with pytest.raises(ValueError, match=message):
            parse_grid(spec)


class TestRunPipeline:
    """Test cases for single runs."""

    def test_completed_run_writes_results(self, temp_workspace, test_helpers, quiet_settings):
        path = test_helpers.single_uav_scenario(temp_workspace, position=(0.0, 0.0, 1.0), t_final=3.0)
        progress = []
        result = RunPipeline(quiet_settings, lambda msg, pct: progress.append(pct)).run(
            path, temp_workspace / "output" / "single"
        )
        assert result["status"] == RunStatus.COMPLETED.value
        assert result["exit_code"] == 0
        metrics = json.loads(Path(result["files"]["metrics"]).read_text(encoding="utf-8"))
        assert metrics["status"] == "completed"
        assert metrics["all_landed"] is True
        assert metrics["touchdowns"][0]["uav"] == 1
        assert "elapsed_s" not in metrics
        assert progress[0] == 0 and progress[-1] == 100

    def test_missing_scenario_is_an_error(self, temp_workspace, quiet_settings):
        result = RunPipeline(quiet_settings).run(temp_workspace / "missing.cfg", temp_workspace / "out")
        assert result["status"] == RunStatus.ERROR.value
        assert result["exit_code"] == 1
        assert result["files"] == {}
        assert "not found" in result["error"]

    def test_infeasible_run_is_halted(self, temp_workspace, test_helpers, quiet_settings):
        path = test_helpers.write_scenario(temp_workspace, PAIR_TEMPLATE.format(gap=0.1), "overlap.cfg")
        result = RunPipeline(quiet_settings).run(path, temp_workspace / "out")
        assert result["status"] == RunStatus.HALTED.value
        assert result["exit_code"] == 3
        assert result["halt"]["row_name"] == "h_s12"
        metrics = json.loads(Path(result["files"]["metrics"]).read_text(encoding="utf-8"))
        assert metrics["halt"]["tick"] == 0

    def test_initial_overlap_is_a_breach(self, temp_workspace, test_helpers, quiet_settings):
        path = test_helpers.write_scenario(temp_workspace, PAIR_TEMPLATE.format(gap=0.45), "close.cfg")
        result = RunPipeline(quiet_settings).run(path, temp_workspace / "out")
        assert result["status"] == RunStatus.BREACH.value
        assert result["exit_code"] == 4
        assert result["breach"]["barrier"] == "h_s12"
        assert result["breach"]["tick"] == 0

    def test_overrides_reach_the_barriers(self, temp_workspace, test_helpers, quiet_settings):
        path = test_helpers.single_uav_scenario(temp_workspace, t_final=0.1)
        result = RunPipeline(quiet_settings).run(path, temp_workspace / "out", overrides={"beta": 2.0})
        assert result["metrics"]["lcbf_shape"][0]["beta"] == 2.0

    def test_override_breaking_invariants_is_an_error(self, temp_workspace, quiet_settings):
        result = RunPipeline(quiet_settings).run("scenario2", temp_workspace / "out", overrides={"sigma": 0.1})
        assert result["exit_code"] == 1
        assert any("Assumption 1" in issue for issue in result["issues"])

    def test_module_level_run(self, temp_workspace, test_helpers, quiet_settings):
        path = test_helpers.single_uav_scenario(temp_workspace, t_final=0.1)
        result = run(path, temp_workspace / "out", settings=quiet_settings)
        assert set(result["files"]) >= {"states", "barriers", "inputs", "metrics"}


class TestSweep:
    """Test cases for parameter sweeps."""

    def test_empty_grid_writes_header_only(self, temp_workspace, test_helpers, quiet_settings):
        path = test_helpers.single_uav_scenario(temp_workspace, t_final=0.1)
        result = run_sweep(path, "", temp_workspace / "sweep", settings=quiet_settings)
        assert result["rows"] == []
        header, rows = test_helpers.read_csv(result["summary_file"])
        assert header == SWEEP_COLUMNS
        assert rows == []

    def test_bad_scenario(self, temp_workspace, quiet_settings):
        result = run_sweep(temp_workspace / "missing.cfg", "beta=1", temp_workspace / "sweep",
                           settings=quiet_settings)
        assert result["exit_code"] == 1
        assert result["summary_file"] is None

    def test_sweep_run_doubling_beta_doubles_boundary(self, temp_workspace, test_helpers, quiet_settings):
        path = test_helpers.single_uav_scenario(temp_workspace, position=(1.0, 0.0, 1.0), t_final=0.2)
        out = temp_workspace / "sweep"
        result = run_sweep(path, "beta=0.5,1.0", out, settings=quiet_settings, max_workers=2)
        assert result["failed_cells"] == []
        _, rows = test_helpers.read_csv(result["summary_file"])
        assert [float(r["beta"]) for r in rows] == [0.5, 1.0]
        assert float(rows[1]["peak_boundary_height"]) == pytest.approx(2 * float(rows[0]["peak_boundary_height"]))

        # e_z - h_l is the boundary height at the UAV's horizontal distance
        gaps = []
        for cell in ("cell_000", "cell_001"):
            _, errors = test_helpers.read_csv(out / cell / "landing_errors.csv")
            _, barriers = test_helpers.read_csv(out / cell / "barriers.csv")
            gaps.append(float(errors[0]["ez"]) - float(barriers[0]["value"]))
        assert gaps[1] == pytest.approx(2 * gaps[0], rel=1e-12)
