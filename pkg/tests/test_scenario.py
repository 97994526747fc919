#!/usr/bin/env python3
"""
Unit Tests for Scenario Loading and UGV Motion Programs
"""

import math

import numpy as np
import pytest

from cbfland_cli.config.scenario import (
    Fidelity,
    check_invariants,
    load_scenario,
    resolve_scenario_path,
    with_overrides,
)
from cbfland_cli.core.errors import ScenarioError
from cbfland_cli.core.motion import MotionProgram, ProgramKind, ugv_state_at

TWO_UAV_SCENARIO = """\
name = "pair"
t_start = 0.0
controller_on_time = 0.0
t_final = 5.0

[[uav]]
target = 1
position = [0.0, 0.0, 1.0]

[[uav]]
target = 2
position = [1.0, 0.0, 1.0]
mass = {mass}

[[ugv]]
position = [{x1}, 0.0, 0.1]
{program1}

[[ugv]]
position = [2.0, 0.0, 0.1]
"""


def _pair(mass=1.0, x1=-2.0, program1=""):
    return TWO_UAV_SCENARIO.format(mass=mass, x1=x1, program1=program1)


class TestBundledScenarios:
    """Test cases for the shipped scenario files."""

    def test_scenario1_layout(self, scenario1_cfg):
        cfg = scenario1_cfg
        assert cfg.n_uavs == 3
        assert cfg.n_ticks == 2000
        assert cfg.inner_steps == 10
        assert cfg.fidelity is Fidelity.KINEMATIC
        assert [u.carrier for u in cfg.uav] == [3, 1, 2]
        assert [u.target for u in cfg.uav] == [1, 2, 3]
        assert check_invariants(cfg) == []

    def test_scenario1_pads_are_static(self, scenario1_cfg):
        pads = scenario1_cfg.target_programs()
        np.testing.assert_allclose(pads[0].position(12.0), [-2.0, 2.0, 0.1])
        np.testing.assert_array_equal(pads[1].velocity(3.0), 0.0)

    def test_scenario2_pre_roll(self, scenario2_cfg):
        assert scenario2_cfg.t_start == -3.0
        assert scenario2_cfg.controller_on_time == 0.0
        assert scenario2_cfg.n_ticks == 2300
        assert scenario2_cfg.tick_time(300) == pytest.approx(0.0)

    @pytest.mark.parametrize("t", [-3.0, 0.0, 4.2, 20.0])
    def test_scenario2_ugv1_closed_form(self, scenario2_cfg, t):
        p = scenario2_cfg.programs()[0].position(t)
        assert p[0] == pytest.approx(0.2 * (t + 3.0))
        assert p[1] == pytest.approx(2.0 + 0.4 * (math.sin(0.5 * t) - math.sin(-1.5)))
        assert p[2] == pytest.approx(0.1)

    def test_inert_fields_recorded(self, scenario1_cfg):
        assert (scenario1_cfg.inert.a, scenario1_cfg.inert.b, scenario1_cfg.inert.m) == (1.0, 3.0, 0.5)

    def test_resolve_bundled_name(self):
        assert resolve_scenario_path("scenario2").name == "scenario2.cfg"


class TestScenarioErrors:
    """Test cases for rejected scenario files."""

    def test_missing_file(self, temp_workspace):
        with pytest.raises(ScenarioError, match="not found"):
            load_scenario(temp_workspace / "nope.cfg")

    def test_syntax_error_has_line(self, temp_workspace, test_helpers):
        path = test_helpers.write_scenario(temp_workspace, 'name = "x"\nt_start = 0.0\nt_final = = 3\n')
        with pytest.raises(ScenarioError) as exc:
            load_scenario(path)
        assert exc.value.line == 3
        assert "syntax error" in str(exc.value)

    def test_field_error_points_at_key(self, temp_workspace, test_helpers):
        text = _pair(mass=-1.0)
        path = test_helpers.write_scenario(temp_workspace, text)
        with pytest.raises(ScenarioError) as exc:
            load_scenario(path)
        expected = text.splitlines().index("mass = -1.0") + 1
        assert exc.value.line == expected
        assert "uav.1.mass" in str(exc.value)

    def test_non_utf8_rejected(self, temp_workspace):
        path = temp_workspace / "latin.cfg"
        path.write_bytes('name = "caf\xe9"\n'.encode("latin-1"))
        with pytest.raises(ScenarioError, match="UTF-8"):
            load_scenario(path)

    def test_overlapping_pads_rejected(self, temp_workspace, test_helpers):
        path = test_helpers.write_scenario(temp_workspace, _pair(x1=2.2))
        with pytest.raises(ScenarioError) as exc:
            load_scenario(path)
        assert any("Assumption 2" in issue for issue in exc.value.issues)

    def test_fast_pad_rejected(self, temp_workspace, test_helpers):
        program = 'program = "sinusoidal"\noffset = [0.0, 3.0, 0.0]'
        path = test_helpers.write_scenario(temp_workspace, _pair(program1=program))
        with pytest.raises(ScenarioError) as exc:
            load_scenario(path)
        assert any("Assumption 1" in issue for issue in exc.value.issues)

    def test_unchecked_load_skips_invariants(self, temp_workspace, test_helpers):
        path = test_helpers.write_scenario(temp_workspace, _pair(x1=2.2))
        cfg = load_scenario(path, check=False)
        assert check_invariants(cfg)

    def test_shared_target_rejected(self, scenario1_cfg):
        data = scenario1_cfg.model_dump()
        data["uav"][1]["target"] = 1
        cfg = type(scenario1_cfg).model_validate(data)
        assert any("distinct" in issue for issue in check_invariants(cfg))

    def test_dt_inner_must_divide_dt_outer(self, scenario1_cfg):
        cfg = scenario1_cfg.model_copy(update={"dt_inner": 0.003})
        assert any("divide" in issue for issue in check_invariants(cfg))


class TestOverrides:
    """Test cases for sweep overrides."""

    def test_alpha_beta_apply_to_every_uav(self, scenario1_cfg):
        cfg = with_overrides(scenario1_cfg, alpha=3.0, beta=2.0)
        assert all(u.alpha == 3.0 and u.beta == 2.0 for u in cfg.uav)
        assert scenario1_cfg.uav[0].alpha == 2.0

    def test_rho_sets_both_gains(self, scenario1_cfg):
        cfg = with_overrides(scenario1_cfg, rho=4.0)
        assert cfg.filter.rho_l == 4.0 and cfg.filter.rho_s == 4.0

    def test_fidelity_alias(self, scenario1_cfg):
        cfg = with_overrides(scenario1_cfg, fidelity="full_dynamics")
        assert cfg.fidelity is Fidelity.FULL
        assert cfg.effective_breach_tolerance() == (0.05, 0.05)

    def test_unknown_override(self, scenario1_cfg):
        with pytest.raises(ValueError, match="unknown override"):
            with_overrides(scenario1_cfg, gamma=1.0)

    def test_peak_shaping(self, temp_workspace, test_helpers):
        text = test_helpers.single_uav_scenario(temp_workspace).read_text(encoding="utf-8")
        text = text.replace("target = 1", "target = 1\npeak_radius = 0.5\npeak_height = 0.4")
        path = test_helpers.write_scenario(temp_workspace, text, "peak.cfg")
        cfg = load_scenario(path)
        assert cfg.uav[0].alpha == pytest.approx(2.0)
        assert cfg.uav[0].beta == pytest.approx(0.4 * math.e)
        overridden = with_overrides(cfg, sigma=1.5)
        assert overridden.uav[0].alpha == pytest.approx(2.0)

    def test_default_breach_tolerance(self, scenario1_cfg):
        assert scenario1_cfg.effective_breach_tolerance() == (1e-6, 0.0)
        cfg = scenario1_cfg.model_copy(update={"breach_tolerance": 0.1})
        assert cfg.effective_breach_tolerance() == (0.1, 0.1)


class TestMotionPrograms:
    """Test cases for UGV velocity programs."""

    def test_static(self):
        program = MotionProgram.static([1.0, 2.0, 0.1])
        state = ugv_state_at(program, 5.0)
        np.testing.assert_array_equal(state.position, [1.0, 2.0, 0.1])
        np.testing.assert_array_equal(state.velocity, 0.0)

    def test_sinusoid_position_integrates_velocity(self):
        program = MotionProgram(kind=ProgramKind.SINUSOIDAL, p0=[0, 0, 0], t0=-1.0,
                                offset=[0.1, 0, 0], amplitude=[0, 0.3, 0.05], omega=0.7, phase=0.4)
        for t in (0.0, 1.3, 6.0):
            step = 1e-5
            fd = (program.position(t + step) - program.position(t - step)) / (2 * step)
            np.testing.assert_allclose(fd, program.velocity(t), atol=1e-8)

    def test_zero_frequency_sinusoid_is_constant_velocity(self):
        program = MotionProgram(kind=ProgramKind.SINUSOIDAL, p0=[0, 0, 0],
                                amplitude=[0.5, 0, 0], omega=0.0)
        np.testing.assert_allclose(program.position(2.0), [1.0, 0.0, 0.0])

    def test_piecewise(self):
        program = MotionProgram(kind=ProgramKind.PIECEWISE, p0=[0, 0, 0],
                                breakpoints=(1.0, 3.0), velocities=[[1, 0, 0], [0, -0.5, 0]])
        np.testing.assert_array_equal(program.velocity(0.5), 0.0)
        np.testing.assert_array_equal(program.velocity(3.0), [0.0, -0.5, 0.0])
        np.testing.assert_allclose(program.position(4.0), [2.0, -0.5, 0.0])

    def test_position_before_start_rejected(self):
        with pytest.raises(ValueError, match="precedes"):
            MotionProgram.static([0, 0, 0]).position(-1.0)

    def test_breakpoints_must_increase(self):
        with pytest.raises(ValueError, match="increasing"):
            MotionProgram(kind=ProgramKind.PIECEWISE, p0=[0, 0, 0],
                          breakpoints=(2.0, 1.0), velocities=[[1, 0, 0], [0, 1, 0]])
