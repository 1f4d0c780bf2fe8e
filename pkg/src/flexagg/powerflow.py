"""Newton-Raphson AC power flow in polar coordinates."""
from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .grid_model import AdmittanceMatrix, GridCase, build_admittance

logger = logging.getLogger(__name__)

PIVOT_FLOOR = 1e-12


class ConvergenceError(RuntimeError):
    """Newton-Raphson did not reach the mismatch tolerance."""

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


class SingularJacobianError(ConvergenceError):
    """LU factorization of the power flow Jacobian hit a near-zero pivot."""


@dataclass(frozen=True)
class ConvergenceReport:
    iterations: int
    final_mismatch: float
    converged: bool
    mismatch_history: tuple = ()

    @property
    def quadratic_ratios(self) -> list[float]:
        """``r[k+1] / r[k]**2`` along the mismatch history."""
        h = self.mismatch_history
        return [h[k + 1] / h[k] ** 2 for k in range(len(h) - 1) if h[k] > 0 and h[k + 1] > 0]


@dataclass(frozen=True)
class PowerFlowSolution:
    v: np.ndarray
    delta: np.ndarray
    p: np.ndarray
    q: np.ndarray
    branch_pq: np.ndarray  # (b, 2, 2): [branch, terminal(from/to), (p, q)]
    branch_i: np.ndarray   # (b, 2): current magnitude per terminal
    report: ConvergenceReport
    p_scheduled: np.ndarray = field(repr=False, default=None)
    q_scheduled: np.ndarray = field(repr=False, default=None)

    @property
    def phasors(self) -> np.ndarray:
        return self.v * np.exp(1j * self.delta)

    def to_dict(self) -> dict:
        return {
            "v": self.v.tolist(),
            "delta": self.delta.tolist(),
            "p": self.p.tolist(),
            "q": self.q.tolist(),
            "branch_pq": [{"from": bpq[0].tolist(), "to": bpq[1].tolist()} for bpq in self.branch_pq],
            "branch_i": self.branch_i.tolist(),
            "report": {
                "iterations": self.report.iterations,
                "final_mismatch": self.report.final_mismatch,
                "converged": self.report.converged,
                "mismatch_history": list(self.report.mismatch_history),
            },
        }


def compute_bus_injections(v, delta, Y: AdmittanceMatrix):
    """Active and reactive bus injections from the polar power flow equations.

    The diagonal term is included in the sum: with ``delta_i - delta_i = 0`` it
    reduces to ``v_i**2 |y_ii| cos(theta_ii)`` and ``-v_i**2 |y_ii| sin(theta_ii)``.
    """
    v = np.asarray(v, dtype=float)
    delta = np.asarray(delta, dtype=float)
    ang = delta[:, None] - delta[None, :] - Y.theta
    w = v[:, None] * v[None, :] * Y.magnitude
    return (w * np.cos(ang)).sum(axis=1), (w * np.sin(ang)).sum(axis=1)


def _branch_terminal_admittances(case: GridCase):
    """Self (y_ii) and mutual (y_ij) admittances seen from each branch terminal.

    Returns arrays of shape (b, 2) ordered [from terminal, to terminal] and the
    terminal bus pairs ``(near, far)`` of the same shape.
    """
    f, t, ys, ysh, _ = case.branch_arrays()
    self_y = np.stack([ys + ysh / 2, ys + ysh / 2], axis=1)
    mutual_y = np.stack([-ys, -ys], axis=1)
    near = np.stack([f, t], axis=1)
    far = np.stack([t, f], axis=1)
    return self_y, mutual_y, near, far


def compute_branch_flows(solution_or_state, case: GridCase) -> np.ndarray:
    """Terminal (p_ij, q_ij) for every branch at both ends, shape ``(b, 2, 2)``."""
    v, delta = _state(solution_or_state)
    self_y, mutual_y, near, far = _branch_terminal_admittances(case)
    vi, vj = v[near], v[far]
    ang = delta[near] - delta[far] - np.angle(mutual_y)
    ymag, th = np.abs(self_y), np.angle(self_y)
    mmag = np.abs(mutual_y)
    p = vi ** 2 * ymag * np.cos(th) + vi * vj * mmag * np.cos(ang)
    q = -vi ** 2 * ymag * np.sin(th) + vi * vj * mmag * np.sin(ang)
    return np.stack([p, q], axis=2)


def compute_branch_currents(solution_or_state, case: GridCase) -> np.ndarray:
    """Terminal current magnitudes ``|(V_i - V_j)/z + V_i y_sh/2|``, shape ``(b, 2)``."""
    v, delta = _state(solution_or_state)
    V = v * np.exp(1j * delta)
    self_y, mutual_y, near, far = _branch_terminal_admittances(case)
    return np.abs(self_y * V[near] + mutual_y * V[far])


def _state(obj):
    if isinstance(obj, tuple):
        return np.asarray(obj[0], dtype=float), np.asarray(obj[1], dtype=float)
    return obj.v, obj.delta


def power_flow_jacobian(v, delta, Y: AdmittanceMatrix, pq: np.ndarray) -> np.ndarray:
    """Analytic d(p, q)/d(delta, v) restricted to the buses in ``pq``.

    Row/column order is all angles (resp. active powers) first, then all
    magnitudes (resp. reactive powers).
    """
    V = v * np.exp(1j * delta)
    I = Y.Y @ V
    diagV = np.diag(V)
    dS_dth = 1j * diagV @ np.conj(np.diag(I) - Y.Y @ diagV)
    dS_dv = diagV @ np.conj(Y.Y @ np.diag(V / v)) + np.diag(np.conj(I) * V / v)
    idx = np.ix_(pq, pq)
    return np.block([
        [dS_dth.real[idx], dS_dv.real[idx]],
        [dS_dth.imag[idx], dS_dv.imag[idx]],
    ])


def solve_newton_raphson(case: GridCase, tolerance: float = 1e-8, max_iter: int = 20,
                         flat_start: bool = True, initial=None) -> PowerFlowSolution:
    """Solve the AC power flow; every non-slack bus is a PQ bus.

    Parameters
    ----------
    case : GridCase
    tolerance : float
        Maximum absolute p.u. mismatch over the non-slack buses.
    max_iter : int
    flat_start : bool
        Start from ``v = 1, delta = 0`` (slack at its set-point).  When False,
        ``initial=(v, delta)`` must be given.

    Raises
    ------
    ConvergenceError
        If the mismatch is still above ``tolerance`` after ``max_iter`` updates.
    SingularJacobianError
        If a pivot of the LU factorization falls below 1e-12.
    """
    if tolerance <= 0:
        raise ValueError("tolerance must be positive")
    Y = build_admittance(case)
    slack = case.slack_bus
    pq = case.non_slack
    npq = len(pq)
    p_sch, q_sch = case.p_scheduled, case.q_scheduled

    if flat_start or initial is None:
        v = np.ones(case.n_bus)
        delta = np.zeros(case.n_bus)
    else:
        v = np.array(initial[0], dtype=float)
        delta = np.array(initial[1], dtype=float)
    v[slack] = case.buses[slack].v_set
    delta[slack] = 0.0

    history = []
    it = 0
    while True:
        p, q = compute_bus_injections(v, delta, Y)
        mis = np.concatenate([p_sch[pq] - p[pq], q_sch[pq] - q[pq]])
        norm = float(np.max(np.abs(mis))) if npq else 0.0
        history.append(norm)
        logger.debug("NR iteration %d: mismatch %.3e", it, norm)
        if norm <= tolerance:
            break
        if it >= max_iter:
            report = ConvergenceReport(it, norm, False, tuple(history))
            raise ConvergenceError(f"power flow did not converge in {max_iter} iterations "
                                   f"(mismatch {norm:.3e} p.u.)", report)
        J = power_flow_jacobian(v, delta, Y, pq)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", scipy.linalg.LinAlgWarning)
            lu, piv = scipy.linalg.lu_factor(J, check_finite=False)
        if np.min(np.abs(np.diag(lu))) < PIVOT_FLOOR or not np.all(np.isfinite(lu)):
            report = ConvergenceReport(it, norm, False, tuple(history))
            raise SingularJacobianError(f"singular Jacobian at iteration {it}", report)
        dx = scipy.linalg.lu_solve((lu, piv), mis, check_finite=False)
        delta[pq] += dx[:npq]
        v[pq] += dx[npq:]
        it += 1
        if not np.all(np.isfinite(v)):
            report = ConvergenceReport(it, float("inf"), False, tuple(history))
            raise ConvergenceError("power flow diverged", report)

    report = ConvergenceReport(it, norm, True, tuple(history))
    state = (v, delta)
    return PowerFlowSolution(
        v=v, delta=delta, p=p, q=q,
        branch_pq=compute_branch_flows(state, case),
        branch_i=compute_branch_currents(state, case),
        report=report,
        p_scheduled=p_sch, q_scheduled=q_sch,
    )


def interconnection_flows(solution: PowerFlowSolution, case: GridCase) -> np.ndarray:
    """``(p, q)`` at the from-terminal of each interconnection branch, shape ``(ic, 2)``."""
    return solution.branch_pq[list(case.interconnections), 0, :]
