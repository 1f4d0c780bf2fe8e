import numpy as np
import pytest

from flexagg.for_engine import Scenario
from flexagg.grid_model import Branch, Bus, GridCase, NodeFlexibility, OperatingLimits
from flexagg.lp_core import (INFEASIBLE, OPTIMAL, UNBOUNDED, LinearProgram, SampleBounds, assemble_for_lp,
                             solve_lp, write_lp_csv)
from flexagg.powerflow import solve_newton_raphson
from flexagg.sensitivity import compute_sensitivities
from flexagg.validation import lp_constraint_audit, slack_recomputation_error


def tiny(c, lower, upper, A=None, b=None):
    A = np.zeros((0, len(c))) if A is None else A
    b = np.zeros(0) if b is None else b
    return LinearProgram(c, A, b, np.zeros((0, len(c))), np.zeros(0), lower, upper)


def test_bounded_minimum():
    sol = solve_lp(tiny([1.0], [1.0], [2.0]))
    assert sol.status == OPTIMAL and sol.x[0] == pytest.approx(1.0)


def test_infeasible():
    assert solve_lp(tiny([1.0], [1.0], [0.0])).status == INFEASIBLE


def test_unbounded():
    assert solve_lp(tiny([-1.0], [0.0], [np.inf])).status == UNBOUNDED


def test_row_count_checked():
    with pytest.raises(ValueError):
        LinearProgram([1.0], np.zeros((2, 1)), np.zeros(1), np.zeros((0, 1)), np.zeros(0), [0], [1])


@pytest.fixture(scope="module")
def four_bus():
    buses = (Bus(0, "slack"), Bus(1, "load", -0.2, 0.05), Bus(2, "load", 0.3, 0.02), Bus(3, "load", -0.1, 0.0))
    branches = (Branch(1, 0, 0.001 + 0.04j, 0, 5), Branch(2, 0, 0.001 + 0.05j, 0, 5),
                Branch(3, 0, 0.001 + 0.04j, 0, 5), Branch(1, 2, 0.01 + 0.05j, 0.01j, 3),
                Branch(2, 3, 0.01 + 0.05j, 0.01j, 3))
    case = GridCase(1.0, buses, branches, (0, 1, 2), (NodeFlexibility(2, -0.1, 0, -0.2, 0.2),
                                                      NodeFlexibility(3, -0.05, 0, -0.1, 0.1)))
    sol = solve_newton_raphson(case, tolerance=1e-12)
    return case, compute_sensitivities(sol, case)


def bounds_for(case, step=1.0):
    n = case.n_bus
    b = SampleBounds.zeros(n)
    dp_min, dq_min, dq_max = b.dp_min.copy(), b.dq_min.copy(), b.dq_max.copy()
    for f in case.flexibilities:
        dp_min[f.bus] = f.delta_p_min * step
        dq_min[f.bus], dq_max[f.bus] = f.delta_q_min, f.delta_q_max
    return SampleBounds(dp_min, np.zeros(n), dq_min, dq_max)


def test_column_count_four_bus(four_bus):
    case, bundle = four_bus
    lp = assemble_for_lp(bundle, case, bounds_for(case), Scenario("s", 0), 0.1)
    assert lp.m == 4 * 4 + 2 * 3 == 22


def test_b_eq_zero_except_threshold(four_bus):
    case, bundle = four_bus
    lp = assemble_for_lp(bundle, case, bounds_for(case), Scenario("s", 0), 0.123)
    assert lp.eq_labels[-1] == "q_threshold"
    assert lp.b_eq[-1] == 0.123
    np.testing.assert_array_equal(lp.b_eq[:-1], 0)


def test_coupling_rows_have_one_minus_one(four_bus):
    case, bundle = four_bus
    lp = assemble_for_lp(bundle, case, bounds_for(case), Scenario("s", 0), 0.1)
    n = case.n_bus
    blk = lp.blocks()
    for r in range(2 * n):
        seg = lp.A_eq[r, blk["ddelta"].start:blk["dv"].stop]
        assert np.count_nonzero(seg == -1) == 1 and np.count_nonzero(seg) == 1


def test_zero_bounds_zero_threshold_gives_origin(four_bus):
    case, bundle = four_bus
    lp = assemble_for_lp(bundle, case, SampleBounds.zeros(case.n_bus), Scenario("s", 1), 0.0)
    sol = solve_lp(lp)
    assert sol.optimal and sol.objective == pytest.approx(0, abs=1e-12)
    np.testing.assert_allclose(sol.x, 0, atol=1e-12)


@pytest.mark.parametrize("sweep, q", [("upper", 0.15), ("lower", -0.15)])
def test_audit_and_slack_exactness(four_bus, sweep, q):
    case, bundle = four_bus
    lp = assemble_for_lp(bundle, case, bounds_for(case), Scenario("s", 2), q, sweep)
    sol = solve_lp(lp)
    assert sol.optimal
    assert lp_constraint_audit(lp, sol) == []
    assert slack_recomputation_error(lp, sol, bundle, case) <= 1e-9
    assert sol.x[case.n_bus:2 * case.n_bus].sum() == pytest.approx(q, abs=1e-9)


def test_relaxing_vmax_never_increases_objective(four_bus):
    case, bundle = four_bus
    tight = case.with_limits(OperatingLimits.uniform(4, v_min=0.9, v_max=float(bundle.operating_point.v.max()) + 0.003))
    loose = case.with_limits(OperatingLimits.uniform(4, v_min=0.9, v_max=float(bundle.operating_point.v.max()) + 0.013))
    objs = []
    for c in (tight, loose):
        sol = solve_lp(assemble_for_lp(bundle, c, bounds_for(c), Scenario("s", 0), 0.15))
        assert sol.optimal
        objs.append(sol.objective)
    assert objs[1] <= objs[0] + 1e-12


def test_operating_point_mismatch(four_bus, case5, bundle5):
    case, bundle = four_bus
    with pytest.raises(ValueError, match="operating point mismatch"):
        assemble_for_lp(bundle5, case, bounds_for(case), Scenario("s", 0), 0.1)
    shifted = case.with_injections(case.p_scheduled + 0.01, case.q_scheduled)
    with pytest.raises(ValueError, match="operating point mismatch"):
        assemble_for_lp(bundle, shifted, bounds_for(case), Scenario("s", 0), 0.1)


def test_bad_sweep_name(four_bus):
    case, bundle = four_bus
    with pytest.raises(ValueError):
        assemble_for_lp(bundle, case, bounds_for(case), Scenario("s", 0), 0.1, sweep="sideways")


def test_current_rows_upper_only(four_bus):
    case, bundle = four_bus
    lp = assemble_for_lp(bundle, case, bounds_for(case), Scenario("s", 0), 0.1)
    labels = [l for l in lp.ineq_labels if l.startswith("i_max")]
    assert len(labels) == int(bundle.current_rows_valid.sum()) == len(set(labels))


def test_csv_dump_round_trips(four_bus, tmp_path):
    case, bundle = four_bus
    lp = assemble_for_lp(bundle, case, bounds_for(case), Scenario("s", 0), 0.1)
    c_path, ineq_path, eq_path = write_lp_csv(lp, tmp_path / "lp")
    np.testing.assert_array_equal(np.loadtxt(c_path, delimiter=","), lp.c)
    eq = np.loadtxt(eq_path, delimiter=",")
    np.testing.assert_array_equal(eq[:, :-1], lp.A_eq)
    np.testing.assert_array_equal(eq[:, -1], lp.b_eq)
