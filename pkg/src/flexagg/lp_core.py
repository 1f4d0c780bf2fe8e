"""Assembly and solution of the flexibility linear program.

Variable vector layout (length ``m = 4n + 2*ic``)::

    x = [dp (n), dq (n), ddelta (n), dv (n), slack (2*ic)]

where ``slack`` holds the linearized interconnection flow deviations, active
rows first, then reactive rows.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linprog

from .grid_model import GridCase
from .sensitivity import SensitivityBundle

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
UNBOUNDED = "unbounded"
NUMERICAL = "numerical_failure"

SOLVER_TOLERANCE = 1e-9
SOLVER_METHOD = "highs-ds"  # HiGHS dual simplex: deterministic pivoting for a given input


@dataclass
class LinearProgram:
    c: np.ndarray
    A_ineq: np.ndarray
    b_ineq: np.ndarray
    A_eq: np.ndarray
    b_eq: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    ineq_labels: list = field(default_factory=list)
    eq_labels: list = field(default_factory=list)
    n_bus: int | None = None
    n_ic: int | None = None

    def __post_init__(self):
        m = len(self.c)
        self.c = np.asarray(self.c, dtype=float)
        self.A_ineq = np.asarray(self.A_ineq, dtype=float).reshape(-1, m)
        self.b_ineq = np.asarray(self.b_ineq, dtype=float).reshape(-1)
        self.A_eq = np.asarray(self.A_eq, dtype=float).reshape(-1, m)
        self.b_eq = np.asarray(self.b_eq, dtype=float).reshape(-1)
        self.lower = np.asarray(self.lower, dtype=float)
        self.upper = np.asarray(self.upper, dtype=float)
        if len(self.b_ineq) != len(self.A_ineq) or len(self.b_eq) != len(self.A_eq):
            raise ValueError("row count of A and b differ")
        if len(self.lower) != m or len(self.upper) != m:
            raise ValueError("bounds must have one entry per variable")
        if not self.ineq_labels:
            self.ineq_labels = [f"ineq[{k}]" for k in range(len(self.b_ineq))]
        if not self.eq_labels:
            self.eq_labels = [f"eq[{k}]" for k in range(len(self.b_eq))]

    @property
    def m(self) -> int:
        return len(self.c)

    def blocks(self) -> dict:
        """Column slices of the variable blocks (only for assembled programs)."""
        n, ic = self.n_bus, self.n_ic
        return {"dp": slice(0, n), "dq": slice(n, 2 * n), "ddelta": slice(2 * n, 3 * n),
                "dv": slice(3 * n, 4 * n), "slack": slice(4 * n, 4 * n + 2 * ic)}


@dataclass(frozen=True)
class LPSolution:
    status: str
    x: np.ndarray | None
    objective: float | None
    message: str = ""

    @property
    def optimal(self) -> bool:
        return self.status == OPTIMAL


def solve_lp(lp: LinearProgram, tolerance: float = SOLVER_TOLERANCE) -> LPSolution:
    """Minimize ``c @ x`` subject to the program's rows and variable bounds."""
    bounds = [(None if np.isneginf(lo) else lo, None if np.isposinf(hi) else hi)
              for lo, hi in zip(lp.lower, lp.upper)]
    res = linprog(
        lp.c,
        A_ub=lp.A_ineq if len(lp.b_ineq) else None, b_ub=lp.b_ineq if len(lp.b_ineq) else None,
        A_eq=lp.A_eq if len(lp.b_eq) else None, b_eq=lp.b_eq if len(lp.b_eq) else None,
        bounds=bounds, method=SOLVER_METHOD,
        options={"primal_feasibility_tolerance": tolerance * 0.1,
                 "dual_feasibility_tolerance": tolerance * 0.1},
    )
    if res.status == 0:
        return LPSolution(OPTIMAL, np.asarray(res.x), float(res.fun), res.message)
    status = {2: INFEASIBLE, 3: UNBOUNDED}.get(res.status, NUMERICAL)
    return LPSolution(status, None, None, res.message)


@dataclass(frozen=True)
class SampleBounds:
    """Per-bus box bounds on dp and dq for one sample (p.u., length n each).

    ``p_direction`` is -1 for down-regulation and +1 for up-regulation; the
    active power weight applies to ``p_direction * dp``.
    """

    dp_min: np.ndarray
    dp_max: np.ndarray
    dq_min: np.ndarray
    dq_max: np.ndarray
    p_direction: float = -1.0

    @classmethod
    def zeros(cls, n: int) -> "SampleBounds":
        z = np.zeros(n)
        return cls(z, z, z, z)


@dataclass(frozen=True)
class OperatingState:
    """Operating values entering the right-hand sides: bus v, delta, terminal currents (2b)."""

    v: np.ndarray
    delta: np.ndarray
    i: np.ndarray

    @classmethod
    def from_solution(cls, solution) -> "OperatingState":
        return cls(solution.v, solution.delta, np.concatenate([solution.branch_i[:, 0], solution.branch_i[:, 1]]))


def objective_weights(case: GridCase, scenario, sweep: str, bounds: SampleBounds) -> np.ndarray:
    """Cost vector for one sweep.

    The reactive slack of the prioritized interconnection gets
    ``weight_priority_q``, the other reactive slacks ``weight_other_q``; both are
    negated for the lower (maximum negative) sweep.
    """
    n, ic = case.n_bus, len(case.interconnections)
    c = np.zeros(4 * n + 2 * ic)
    sign = 1.0 if sweep == "upper" else -1.0
    flex = case.flexibility_buses
    c[flex] = scenario.weight_dp * bounds.p_direction
    q_slack = 4 * n + ic + np.arange(ic)
    c[q_slack] = sign * scenario.weight_other_q
    c[q_slack[scenario.priority_interconnection]] = sign * scenario.weight_priority_q
    return c


def _check_operating_point(bundle: SensitivityBundle, case: GridCase):
    op = bundle.operating_point
    if bundle.n_bus != case.n_bus or bundle.PQ_T_DV.shape[0] != 2 * case.n_branch:
        raise ValueError("operating point mismatch: bundle and case dimensions differ")
    if op.p_scheduled is not None:
        pq = case.non_slack
        if not (np.allclose(op.p_scheduled[pq], case.p_scheduled[pq], atol=1e-12)
                and np.allclose(op.q_scheduled[pq], case.q_scheduled[pq], atol=1e-12)):
            raise ValueError("operating point mismatch: bundle was linearized at different injections")


def assemble_for_lp(bundle: SensitivityBundle, case: GridCase, sample_bounds: SampleBounds,
                    scenario, q_thresh: float, sweep: str = "upper",
                    state: OperatingState | None = None) -> LinearProgram:
    """Build the sampled flexibility LP at the bundle's linearization point.

    Parameters
    ----------
    bundle : SensitivityBundle
    case : GridCase
        Must share the bundle's operating point unless ``state`` is given.
    sample_bounds : SampleBounds
    scenario : Scenario
        Supplies objective weights and the prioritized interconnection.
    q_thresh : float
        Right-hand side of the reactive threshold row ``sum_d dq_d = q_thresh``.
    sweep : {"upper", "lower"}
    state : OperatingState, optional
        Operating values for the right-hand sides when they differ from the
        linearization point (frozen-sensitivity sweeps).
    """
    if sweep not in ("upper", "lower"):
        raise ValueError(f"sweep must be 'upper' or 'lower', got {sweep!r}")
    if state is None:
        _check_operating_point(bundle, case)
        state = OperatingState.from_solution(bundle.operating_point)
    n, b = case.n_bus, case.n_branch
    ic = len(case.interconnections)
    m = 4 * n + 2 * ic
    lim = case.limits
    Z = np.zeros
    I = np.eye(n)

    ang = np.hstack([bundle.ddelta_dp, bundle.ddelta_dq, Z((n, 2 * n + 2 * ic))])
    vol = np.hstack([bundle.dv_dp, bundle.dv_dq, Z((n, 2 * n + 2 * ic))])
    valid = bundle.current_rows_valid
    cur = np.hstack([Z((2 * b, 2 * n)), bundle.ID_TB, bundle.IU_TB, Z((2 * b, 2 * ic))])[valid]
    i_lin = np.concatenate([bundle.operating_point.branch_i[:, 0], bundle.operating_point.branch_i[:, 1]])
    f, t, _, _, imax = case.branch_arrays()
    imax2 = np.concatenate([imax, imax])
    cur_rhs = ((imax2 - state.i) / np.where(valid, i_lin, 1.0))[valid]

    A_ineq = np.vstack([ang, -ang, vol, -vol, cur])
    b_ineq = np.concatenate([lim.delta_max - state.delta, -(lim.delta_min - state.delta),
                             lim.v_max - state.v, -(lim.v_min - state.v), cur_rhs])
    term = [f"from[{k}]" for k in range(b)] + [f"to[{k}]" for k in range(b)]
    ineq_labels = ([f"delta_max[bus {k}]" for k in range(n)] + [f"delta_min[bus {k}]" for k in range(n)]
                   + [f"v_max[bus {k}]" for k in range(n)] + [f"v_min[bus {k}]" for k in range(n)]
                   + [f"i_max[branch {term[r]}]" for r in np.flatnonzero(valid)])

    rows = bundle.interconnection_rows(case)
    couple_d = np.hstack([bundle.ddelta_dp, bundle.ddelta_dq, -I, Z((n, n)), Z((n, 2 * ic))])
    couple_v = np.hstack([bundle.dv_dp, bundle.dv_dq, Z((n, n)), -I, Z((n, 2 * ic))])
    slack = np.hstack([bundle.PQ_T_P[rows], bundle.PQ_T_Q[rows], Z((2 * ic, 2 * n)), -np.eye(2 * ic)])
    thresh = np.zeros((1, m))
    thresh[0, n + np.asarray(case.flexibility_buses, dtype=int)] = 1.0
    A_eq = np.vstack([couple_d, couple_v, slack, thresh])
    b_eq = np.zeros(len(A_eq))
    b_eq[-1] = q_thresh
    eq_labels = ([f"delta_coupling[bus {k}]" for k in range(n)] + [f"v_coupling[bus {k}]" for k in range(n)]
                 + [f"p_vert[ic {k}]" for k in range(ic)] + [f"q_vert[ic {k}]" for k in range(ic)]
                 + ["q_threshold"])

    lower = np.full(m, -np.inf)
    upper = np.full(m, np.inf)
    lower[:n], upper[:n] = sample_bounds.dp_min, sample_bounds.dp_max
    lower[n:2 * n], upper[n:2 * n] = sample_bounds.dq_min, sample_bounds.dq_max

    c = objective_weights(case, scenario, sweep, sample_bounds)
    return LinearProgram(c, A_ineq, b_ineq, A_eq, b_eq, lower, upper,
                         ineq_labels, eq_labels, n_bus=n, n_ic=ic)


def write_lp_csv(lp: LinearProgram, prefix) -> list:
    """Dump ``c``, ``[A_ineq | b_ineq]`` and ``[A_eq | b_eq]`` as three CSV files."""
    paths = [f"{prefix}_c.csv", f"{prefix}_ineq.csv", f"{prefix}_eq.csv"]
    np.savetxt(paths[0], lp.c[None, :], delimiter=",", fmt="%.17g")
    np.savetxt(paths[1], np.hstack([lp.A_ineq, lp.b_ineq[:, None]]), delimiter=",", fmt="%.17g")
    np.savetxt(paths[2], np.hstack([lp.A_eq, lp.b_eq[:, None]]), delimiter=",", fmt="%.17g")
    return paths
