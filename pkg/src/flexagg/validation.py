"""Independent oracles for the linearized models.

The checks here deliberately re-derive quantities through a different route
than the code under test: Newton-Raphson re-solves for the injection PTDFs,
central finite differences for the analytic Jacobian and branch partials, and
direct row residuals for assembled linear programs.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .grid_model import GridCase, build_admittance
from .lp_core import LinearProgram, LPSolution
from .powerflow import (ConvergenceError, PowerFlowSolution, compute_branch_currents, compute_branch_flows,
                        compute_bus_injections, power_flow_jacobian, solve_newton_raphson)
from .sensitivity import SensitivityBundle, branch_terminal_sensitivities, compute_sensitivities

Q_FLOOR = 1e-4
ORACLE_TOLERANCE = 1e-12
AUDIT_TOLERANCE = 1e-9
FD_STEP_RANGE = (1e-8, 1e-4)


def default_magnitudes() -> np.ndarray:
    """Zero plus 19 log-spaced magnitudes from 1e-3 to 0.1 p.u."""
    return np.concatenate([[0.0], np.geomspace(1e-3, 0.1, 19)])


class BaseFlowError(ValueError):
    """The monitored branch carries (almost) no reactive flow at the base point."""


@dataclass
class DeviationSweep:
    branch: int
    injection_bus: int
    injection_type: str
    magnitudes: np.ndarray
    q_predicted: np.ndarray
    q_true: np.ndarray
    deviations: np.ndarray
    status: list = field(default_factory=list)
    q_base: float = float("nan")

    def rows(self):
        for k in range(len(self.magnitudes)):
            yield (self.magnitudes[k], self.q_predicted[k], self.q_true[k], self.deviations[k], self.status[k])


def _check_injection_type(injection_type):
    if injection_type not in ("p", "q"):
        raise ValueError(f"injection_type must be 'p' or 'q', got {injection_type!r}")


def perturbed_case(case: GridCase, bus: int, injection_type: str, magnitude: float) -> GridCase:
    p, q = case.p_scheduled.copy(), case.q_scheduled.copy()
    (p if injection_type == "p" else q)[bus] += magnitude
    return case.with_injections(p, q)


def nr_interconnection_flow(case: GridCase, branch: int, initial: PowerFlowSolution | None = None,
                            tolerance: float = ORACLE_TOLERANCE) -> np.ndarray:
    """NR-recomputed ``(p, q)`` at the from-terminal of interconnection ``branch``."""
    kw = {} if initial is None else {"flat_start": False, "initial": (initial.v, initial.delta)}
    sol = solve_newton_raphson(case, tolerance=tolerance, **kw)
    return sol.branch_pq[case.interconnections[branch], 0, :]


def ptdf_deviation_sweep(case: GridCase, branch: int, injection_bus: int, injection_type: str,
                         magnitudes=None, q_floor: float = Q_FLOOR) -> DeviationSweep:
    """Normalized reactive flow error of the injection PTDFs against NR.

    For every magnitude ``m`` the injection at ``injection_bus`` is perturbed by
    ``m`` p.u. and the deviation ``(q_ptdf - q_nr) / q_nr`` at interconnection
    ``branch`` is recorded.  NR failures are recorded per point as NaN.

    Raises
    ------
    BaseFlowError
        If ``|q_ij|`` at the base point does not exceed ``q_floor``.
    """
    _check_injection_type(injection_type)
    if not 0 <= branch < len(case.interconnections):
        raise IndexError(f"interconnection index {branch} out of range")
    if not 0 <= injection_bus < case.n_bus or injection_bus == case.slack_bus:
        raise IndexError(f"injection bus {injection_bus} must be a non-slack bus index")
    mags = default_magnitudes() if magnitudes is None else np.asarray(magnitudes, dtype=float)

    base = solve_newton_raphson(case, tolerance=ORACLE_TOLERANCE)
    bundle = compute_sensitivities(base, case)
    row = case.interconnections[branch]
    q0 = base.branch_pq[row, 0, 1]
    if abs(q0) <= q_floor:
        raise BaseFlowError(f"interconnection {branch} (branch {row}) base reactive flow {q0:.3e} p.u. "
                            f"is below q_floor {q_floor:g}")
    ptdf = bundle.PQ_T_P if injection_type == "p" else bundle.PQ_T_Q
    sens = ptdf[case.n_branch + row, injection_bus]

    pred = q0 + sens * mags
    true = np.full(len(mags), np.nan)
    status = []
    for k, m in enumerate(mags):
        if m == 0.0:
            true[k] = q0
            status.append("ok")
            continue
        try:
            true[k] = nr_interconnection_flow(perturbed_case(case, injection_bus, injection_type, m),
                                              branch, initial=base)[1]
            status.append("ok")
        except ConvergenceError as exc:
            status.append(f"nr_failed: {exc}")
    with np.errstate(divide="ignore", invalid="ignore"):
        dev = np.where(np.abs(true) > q_floor, (pred - true) / true, np.nan)
    dev[mags == 0.0] = 0.0
    return DeviationSweep(branch, injection_bus, injection_type, mags, pred, true, dev, status, float(q0))


def ptdf_prediction_error(case: GridCase, branch: int, injection_bus: int, injection_type: str,
                          magnitude: float, base: PowerFlowSolution | None = None,
                          bundle: SensitivityBundle | None = None):
    """Absolute error of the PTDF-predicted ``(dp_ij, dq_ij)`` against NR.

    Returns ``(predicted_change, true_change)``, each ``(2,)``.
    """
    _check_injection_type(injection_type)
    if base is None:
        base = solve_newton_raphson(case, tolerance=ORACLE_TOLERANCE)
    if bundle is None:
        bundle = compute_sensitivities(base, case)
    row = case.interconnections[branch]
    ptdf = bundle.PQ_T_P if injection_type == "p" else bundle.PQ_T_Q
    predicted = magnitude * ptdf[[row, case.n_branch + row], injection_bus]
    true = nr_interconnection_flow(perturbed_case(case, injection_bus, injection_type, magnitude),
                                   branch, initial=base) - base.branch_pq[row, 0, :]
    return predicted, true


def _check_step(h):
    lo, hi = FD_STEP_RANGE
    if not lo <= h <= hi:
        raise ValueError(f"finite difference step {h!r} outside [{lo:g}, {hi:g}]")


def fd_jacobian(v, delta, case: GridCase, h: float = 1e-6) -> np.ndarray:
    """Central-difference d(p, q)/d(delta, v) over the non-slack buses."""
    _check_step(h)
    Y = build_admittance(case)
    pq = case.non_slack
    n = case.n_bus
    cols = []
    for var in ("delta", "v"):
        for k in pq:
            out = []
            for s in (1.0, -1.0):
                vv, dd = np.array(v, dtype=float), np.array(delta, dtype=float)
                (dd if var == "delta" else vv)[k] += s * h
                p, q = compute_bus_injections(vv, dd, Y)
                out.append(np.concatenate([p[pq], q[pq]]))
            cols.append((out[0] - out[1]) / (2 * h))
    return np.column_stack(cols) if n > 1 else np.zeros((0, 0))


def relative_error(analytic, numeric) -> float:
    analytic = np.asarray(analytic)
    if analytic.size == 0:
        return 0.0
    return float(np.max(np.abs(analytic - numeric) / np.maximum(np.abs(analytic), 1.0)))


def jacobian_fd_check(case: GridCase, h: float = 1e-6, solution: PowerFlowSolution | None = None) -> float:
    """Max relative error of the analytic power flow Jacobian against central FD.

    The check is evaluated at the converged operating point (solved here if
    ``solution`` is not given).
    """
    _check_step(h)
    if solution is None:
        solution = solve_newton_raphson(case)
    J = power_flow_jacobian(solution.v, solution.delta, build_admittance(case), case.non_slack)
    return relative_error(J, fd_jacobian(solution.v, solution.delta, case, h))


def _fd_over_bus_states(func, solution: PowerFlowSolution, n: int, h: float) -> np.ndarray:
    cols = []
    for var in ("delta", "v"):
        for k in range(n):
            vals = []
            for s in (1.0, -1.0):
                v, d = solution.v.copy(), solution.delta.copy()
                (d if var == "delta" else v)[k] += s * h
                vals.append(func(v, d))
            cols.append((vals[0] - vals[1]) / (2 * h))
    return np.column_stack(cols)


def branch_flow_fd_check(case: GridCase, solution: PowerFlowSolution, h: float = 1e-6) -> float:
    """Relative error of the from-terminal flow partials against central FD."""
    _check_step(h)

    def flows(v, d):
        pq = compute_branch_flows((v, d), case)
        return np.concatenate([pq[:, 0, 0], pq[:, 0, 1]])

    fd = _fd_over_bus_states(flows, solution, case.n_bus, h)
    return relative_error(branch_terminal_sensitivities(solution, case), fd)


def current_fd_check(case: GridCase, solution: PowerFlowSolution, bundle: SensitivityBundle,
                     h: float = 1e-6) -> float:
    """Relative error of ``[ID_TB | IU_TB]`` against central FD of ``|i| / i_0``."""
    _check_step(h)
    i0 = np.concatenate([solution.branch_i[:, 0], solution.branch_i[:, 1]])
    valid = bundle.current_rows_valid

    def rel_current(v, d):
        i = compute_branch_currents((v, d), case)
        return np.concatenate([i[:, 0], i[:, 1]])[valid] / i0[valid]

    fd = _fd_over_bus_states(rel_current, solution, case.n_bus, h)
    analytic = np.hstack([bundle.ID_TB, bundle.IU_TB])[valid]
    return relative_error(analytic, fd)


@dataclass(frozen=True)
class Violation:
    kind: str       # "ineq", "eq", "lower", "upper"
    label: str
    residual: float


def lp_constraint_audit(lp: LinearProgram, solution: LPSolution, tol: float = AUDIT_TOLERANCE) -> list:
    """List every row or bound of ``lp`` that ``solution.x`` violates by more than ``tol``."""
    if not solution.optimal:
        raise ValueError(f"can only audit an optimal solution, got status {solution.status!r}")
    x = np.asarray(solution.x, dtype=float)
    out = []
    if len(lp.b_ineq):
        r = lp.A_ineq @ x - lp.b_ineq
        out += [Violation("ineq", lp.ineq_labels[k], float(r[k])) for k in np.flatnonzero(r > tol)]
    if len(lp.b_eq):
        r = lp.A_eq @ x - lp.b_eq
        out += [Violation("eq", lp.eq_labels[k], float(r[k])) for k in np.flatnonzero(np.abs(r) > tol)]
    lo = lp.lower - x
    hi = x - lp.upper
    out += [Violation("lower", f"x[{k}]", float(lo[k])) for k in np.flatnonzero(lo > tol)]
    out += [Violation("upper", f"x[{k}]", float(hi[k])) for k in np.flatnonzero(hi > tol)]
    return out


def slack_recomputation_error(lp: LinearProgram, solution: LPSolution, bundle: SensitivityBundle,
                              case: GridCase) -> float:
    """Max ``|PQ_T_P dp + PQ_T_Q dq - x_slack|`` over the interconnection rows."""
    blk = lp.blocks()
    x = solution.x
    rows = bundle.interconnection_rows(case)
    recomputed = bundle.PQ_T_P[rows] @ x[blk["dp"]] + bundle.PQ_T_Q[rows] @ x[blk["dq"]]
    return float(np.max(np.abs(recomputed - x[blk["slack"]])))
