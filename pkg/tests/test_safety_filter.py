#!/usr/bin/env python3
"""
Unit Tests for the CBF Safety Filter
"""

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from cbfland_cli.core.barriers import LcbfParams, lcbf_eval
from cbfland_cli.core.errors import NonFiniteStateError, QpInfeasibleError
from cbfland_cli.core.geometry import UavState, UgvState
from cbfland_cli.core.safety_filter import (
    ConstraintSystem,
    FilterConfig,
    assemble_constraints,
    filter as cbf_filter,
    pair_row_index,
    pair_rows,
    row_names,
    solve_qp,
)
from cbfland_cli.core.validation import enumerate_active_sets


def _uav(x, y, z):
    return UavState(position=np.array([x, y, z], dtype=float), velocity=np.zeros(3))


def _pad(x, y, z, velocity=(0.0, 0.0, 0.0)):
    return UgvState(position=np.array([x, y, z], dtype=float), velocity=np.array(velocity, dtype=float))


def _system(A, b):
    A = np.atleast_2d(np.asarray(A, dtype=float))
    b = np.asarray(b, dtype=float)
    q = A.shape[0]
    return ConstraintSystem(A=A, b=b, names=[f"r{k}" for k in range(q)],
                            values=np.zeros(q), bypassed=np.zeros(q, dtype=bool))


class TestPairIndex:
    """Test cases for the SCBF row numbering."""

    def test_three_uavs(self):
        assert [pair_row_index(i, j, 3) for i, j in [(1, 2), (1, 3), (2, 3)]] == [4, 5, 6]

    def test_four_uavs(self):
        rows = [row for _, _, row in pair_rows(4)]
        assert rows == [5, 6, 7, 8, 9, 10]

    @given(st.integers(min_value=2, max_value=40))
    def test_rows_are_a_bijection(self, N):
        rows = sorted(row for _, _, row in pair_rows(N))
        assert rows == list(range(N + 1, N * (N + 1) // 2 + 1))

    @pytest.mark.parametrize("i,j,N", [(2, 2, 3), (3, 1, 3), (0, 1, 3), (1, 4, 3), (1, 2, 1)])
    def test_invalid_pairs_rejected(self, i, j, N):
        with pytest.raises(ValueError):
            pair_row_index(i, j, N)

    def test_non_integer_rejected(self):
        with pytest.raises(ValueError, match="integers"):
            pair_row_index(1.0, 2, 3)


class TestRowNames:
    """Test cases for constraint row labels."""

    def test_small_fleet(self):
        assert row_names(3) == ["h_l1", "h_l2", "h_l3", "h_s12", "h_s13", "h_s23"]

    def test_large_fleet_uses_separator(self):
        names = row_names(10)
        assert "h_s1_10" in names
        assert len(names) == 55


class TestAssemble:
    """Test cases for stacking barrier rows."""

    def test_single_uav_row(self, default_lcbf):
        cfg = FilterConfig(rho_l=10.0)
        state, pad = _uav(1.0, 0.0, 1.0), _pad(0.0, 0.0, 0.0)
        cs = assemble_constraints([state], [pad], [default_lcbf], [0.25], cfg)
        ev = lcbf_eval(state.position, pad.position, pad.velocity, default_lcbf)
        assert cs.A.shape == (1, 3)
        np.testing.assert_allclose(cs.A[0], ev.grad_p)
        assert cs.b[0] == pytest.approx(10.0 * ev.value)
        assert cs.names == ["h_l1"]
        assert not cs.bypassed[0]

    def test_moving_pad_adds_time_partial(self, default_lcbf):
        cfg = FilterConfig(rho_l=2.0)
        state, pad = _uav(1.0, 0.5, 1.0), _pad(0.0, 0.0, 0.0, velocity=(0.3, 0.0, 0.0))
        cs = assemble_constraints([state], [pad], [default_lcbf], [0.25], cfg)
        ev = lcbf_eval(state.position, pad.position, pad.velocity, default_lcbf)
        assert ev.dt_partial != 0.0
        assert cs.b[0] == pytest.approx(2.0 * ev.value + ev.dt_partial)

    def test_near_axis_row_bypassed(self, default_lcbf):
        cs = assemble_constraints([_uav(0.0, 0.0, 1.0)], [_pad(0.0, 0.0, 0.1)],
                                  [default_lcbf], [0.25], FilterConfig())
        assert cs.bypassed[0]
        np.testing.assert_array_equal(cs.A[0], 0.0)
        assert cs.b[0] == 1.0
        assert cs.values[0] == pytest.approx(0.9)

    def test_landed_row_bypassed(self, default_lcbf):
        cs = assemble_constraints([_uav(1.0, 0.0, 1.0)], [_pad(0.0, 0.0, 0.0)],
                                  [default_lcbf], [0.25], FilterConfig(), landed={1})
        assert cs.bypassed[0]
        assert cs.b[0] == 1.0

    def test_pair_row_layout(self, default_lcbf):
        states = [_uav(0.0, 0.0, 1.0), _uav(1.0, 0.0, 1.0)]
        pads = [_pad(-1.0, 0.0, 0.0), _pad(2.0, 0.0, 0.0)]
        cs = assemble_constraints(states, pads, [default_lcbf] * 2, [0.25, 0.25], FilterConfig(rho_s=3.0))
        assert cs.A.shape == (3, 6)
        np.testing.assert_allclose(cs.A[2], [-2, 0, 0, 2, 0, 0])
        assert cs.values[2] == pytest.approx(0.75)
        assert cs.b[2] == pytest.approx(3.0 * 0.75)

    def test_per_row_gains(self, default_lcbf):
        states = [_uav(0.0, 0.0, 1.0), _uav(1.0, 0.0, 1.0)]
        pads = [_pad(-1.0, 0.0, 0.0), _pad(2.0, 0.0, 0.0)]
        cfg = FilterConfig(rho_l=[1.0, 5.0], rho_s=[7.0])
        cs = assemble_constraints(states, pads, [default_lcbf] * 2, [0.25, 0.25], cfg)
        assert cs.b[1] == pytest.approx(5.0 * cs.values[1])
        assert cs.b[2] == pytest.approx(7.0 * cs.values[2])

    def test_inconsistent_lengths_rejected(self, default_lcbf):
        with pytest.raises(ValueError, match="inconsistent"):
            assemble_constraints([_uav(1, 0, 1)], [], [default_lcbf], [0.25], FilterConfig())


class TestSolveQp:
    """Test cases for the projection QP."""

    def test_feasible_nominal_is_returned(self):
        cs = _system([[0.0, 0.0, 1.0]], [10.0])
        u_nom = np.array([0.3, -0.2, 0.1])
        sol = solve_qp(u_nom, cs, FilterConfig())
        np.testing.assert_allclose(sol.u, u_nom, atol=1e-12)
        assert not sol.active.any()

    def test_single_half_space_projection(self):
        cs = _system([[0.0, 0.0, 1.0]], [-0.5])
        sol = solve_qp(np.zeros(3), cs, FilterConfig())
        np.testing.assert_allclose(sol.u, [0.0, 0.0, 0.5], atol=1e-10)
        assert sol.multipliers[0] == pytest.approx(0.5)
        assert sol.kkt.max() < 1e-10

    def test_box_clips_nominal(self):
        cs = _system([[0.0, 0.0, 1.0]], [10.0])
        sol = solve_qp(np.array([5.0, 0.0, -3.0]), cs, FilterConfig(sigma=2.0))
        np.testing.assert_allclose(sol.u, [2.0, 0.0, -2.0], atol=1e-10)
        # positive on the lower bound, negative on the upper bound
        assert sol.box_multipliers[0] < 0
        assert sol.box_multipliers[2] > 0

    def test_matches_active_set_enumeration(self, rng):
        cfg = FilterConfig(sigma=2.0)
        for _ in range(25):
            A = rng.normal(size=(4, 3))
            b = rng.uniform(0.0, 1.0, size=4)
            u_nom = rng.uniform(-3.0, 3.0, size=3)
            sol = solve_qp(u_nom, _system(A, b), cfg)
            oracle = enumerate_active_sets(u_nom, A, b, cfg.sigma)
            assert oracle is not None
            np.testing.assert_allclose(sol.u, oracle, atol=1e-7)
            assert np.all(A @ sol.u + b >= -1e-8)
            assert np.all(np.abs(sol.u) <= cfg.sigma + 1e-9)

    def test_contradictory_rows_infeasible(self):
        cs = _system([[0.0, 0.0, 1.0], [0.0, 0.0, -1.0]], [-1.0, -1.0])
        with pytest.raises(QpInfeasibleError) as exc:
            solve_qp(np.zeros(3), cs, FilterConfig())
        assert exc.value.row in (0, 1)
        assert exc.value.violation == pytest.approx(1.0)

    def test_row_outside_box_infeasible(self):
        cs = _system([[0.0, 0.0, 1.0]], [-3.0])
        with pytest.raises(QpInfeasibleError) as exc:
            solve_qp(np.zeros(3), cs, FilterConfig(sigma=2.0))
        assert exc.value.row == 0

    def test_non_finite_input_rejected(self):
        cs = _system([[0.0, 0.0, 1.0]], [1.0])
        with pytest.raises(NonFiniteStateError):
            solve_qp(np.array([np.nan, 0.0, 0.0]), cs, FilterConfig())


class TestFilter:
    """Test cases for one filter tick."""

    def _converging_pair(self):
        states = [_uav(0.0, 0.0, 1.0), _uav(0.6, 0.0, 1.0)]
        pads = [_pad(-1.0, 0.0, 0.0), _pad(1.6, 0.0, 0.0)]
        u_nom = np.array([1.0, 0.0, 0.0, -1.0, 0.0, 0.0])
        return u_nom, states, pads

    def test_separation_row_becomes_active(self, default_lcbf):
        u_nom, states, pads = self._converging_pair()
        result = cbf_filter(u_nom, states, pads, [default_lcbf] * 2, [0.25, 0.25], FilterConfig())
        # projection onto -1.2 u1x + 1.2 u2x + 1.1 >= 0
        assert result.u_star[0] == pytest.approx(1.0 - 1.3 * 1.2 / 2.88, abs=1e-9)
        assert result.u_star[3] == pytest.approx(-result.u_star[0], abs=1e-9)
        assert result.active[2]
        assert not result.active[:2].any()
        assert result.deviation > 0
        assert result.sharing_ok

    def test_landed_uav_pinned_to_pad(self, default_lcbf):
        u_nom, states, pads = self._converging_pair()
        pads[0] = _pad(0.0, 0.0, 0.9, velocity=(0.1, 0.0, 0.0))
        result = cbf_filter(u_nom, states, pads, [default_lcbf] * 2, [0.25, 0.25],
                            FilterConfig(), landed={1})
        np.testing.assert_allclose(result.u_star[:3], [0.1, 0.0, 0.0])
        assert result.pinned == {1}
        assert result.cs.bypassed[0]
        assert result.margins[2] >= -1e-9

    def test_violated_row_between_landed_uavs(self, default_lcbf):
        states = [_uav(0.0, 0.0, 0.1), _uav(0.3, 0.0, 0.1), _uav(5.0, 5.0, 2.0)]
        pads = [_pad(0.0, 0.0, 0.1), _pad(0.3, 0.0, 0.1), _pad(4.0, 5.0, 0.0)]
        with pytest.raises(QpInfeasibleError) as exc:
            cbf_filter(np.zeros(9), states, pads, [default_lcbf] * 3, [0.25] * 3,
                       FilterConfig(), landed={1, 2})
        assert exc.value.row == pair_row_index(1, 2, 3) - 1

    def test_all_landed_skips_solver(self, default_lcbf):
        states = [_uav(0.0, 0.0, 0.1)]
        pads = [_pad(0.0, 0.0, 0.1, velocity=(0.2, 0.0, 0.0))]
        result = cbf_filter(np.ones(3), states, pads, [default_lcbf], [0.25], FilterConfig(), landed={1})
        np.testing.assert_allclose(result.u_star, [0.2, 0.0, 0.0])
        assert not result.active.any()

    def test_margins_nonnegative_for_random_fleets(self, rng):
        cfg = FilterConfig(rho_l=1.0, rho_s=1.0)
        for _ in range(10):
            states = [_uav(3.0 * i, 0.0, 1.0 + rng.uniform(0.0, 0.5)) for i in range(3)]
            pads = [_pad(3.0 * i + rng.uniform(0.2, 1.0), rng.uniform(-0.5, 0.5), 0.1) for i in range(3)]
            lcbf = [LcbfParams(alpha=2.0, beta=1.0)] * 3
            result = cbf_filter(rng.uniform(-1.5, 1.5, size=9), states, pads, lcbf, [0.25] * 3, cfg)
            assert result.sharing_ok
            assert np.all(np.abs(result.u_star) <= cfg.sigma + 1e-9)
