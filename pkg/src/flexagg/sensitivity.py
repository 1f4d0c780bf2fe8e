"""Linearized sensitivities at a converged operating point.

Column conventions
------------------
Bus-variable columns (``2n``) are ``[delta_0..delta_{n-1}, v_0..v_{n-1}]`` and
injection columns are ``[p_0..p_{n-1}, q_0..q_{n-1}]``.  Branch-flow rows
(``2b``) are the from-terminal active flows of all branches followed by the
from-terminal reactive flows.  Current rows (``2b``) are all from-terminal
currents followed by all to-terminal currents.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .grid_model import GridCase, build_admittance
from .powerflow import PowerFlowSolution, _branch_terminal_admittances, power_flow_jacobian

CONDITION_LIMIT = 1e12
CURRENT_FLOOR = 1e-6


class LinearizationError(RuntimeError):
    """The Jacobian at this operating point is singular or badly conditioned."""


@dataclass(frozen=True)
class SensitivityBundle:
    J: np.ndarray
    J_inv_full: np.ndarray
    PQ_T_DV: np.ndarray
    PQ_T_PQ: np.ndarray
    PQ_T_P: np.ndarray
    PQ_T_Q: np.ndarray
    ID_TB: np.ndarray
    IU_TB: np.ndarray
    current_rows_valid: np.ndarray
    operating_point: PowerFlowSolution

    @property
    def n_bus(self) -> int:
        return self.J_inv_full.shape[0] // 2

    @property
    def ddelta_dp(self):
        n = self.n_bus
        return self.J_inv_full[:n, :n]

    @property
    def ddelta_dq(self):
        n = self.n_bus
        return self.J_inv_full[:n, n:]

    @property
    def dv_dp(self):
        n = self.n_bus
        return self.J_inv_full[n:, :n]

    @property
    def dv_dq(self):
        n = self.n_bus
        return self.J_inv_full[n:, n:]

    def interconnection_rows(self, case: GridCase) -> np.ndarray:
        """Row indices of the interconnection p-rows followed by their q-rows."""
        ic = np.asarray(case.interconnections, dtype=int)
        return np.concatenate([ic, ic + case.n_branch])


def build_jacobian(solution: PowerFlowSolution, case: GridCase, Y=None) -> np.ndarray:
    """``2(n-1)`` square Jacobian d(p, q)/d(delta, v) over the non-slack buses."""
    if Y is None:
        Y = build_admittance(case)
    return power_flow_jacobian(solution.v, solution.delta, Y, case.non_slack)


def invert_jacobian(J: np.ndarray, case: GridCase) -> np.ndarray:
    """Invert ``J`` on the non-slack subspace and zero-pad to ``2n x 2n``.

    Raises
    ------
    LinearizationError
        When the 2-norm condition number exceeds 1e12.
    """
    cond = np.linalg.cond(J)
    if not np.isfinite(cond) or cond > CONDITION_LIMIT:
        raise LinearizationError(f"Jacobian condition number {cond:.3e} exceeds {CONDITION_LIMIT:.0e}")
    J_inv = np.linalg.inv(J)
    n = case.n_bus
    pq = case.non_slack
    idx = np.concatenate([pq, pq + n])
    full = np.zeros((2 * n, 2 * n))
    full[np.ix_(idx, idx)] = J_inv
    return full


def branch_terminal_sensitivities(solution: PowerFlowSolution, case: GridCase) -> np.ndarray:
    """Partials of the from-terminal branch flows with respect to bus (delta, v).

    Only the two terminal columns of each row are nonzero.
    """
    n, b = case.n_bus, case.n_branch
    self_y, mutual_y, near, far = _branch_terminal_admittances(case)
    # from-terminal only
    yii, yij = self_y[:, 0], mutual_y[:, 0]
    i, j = near[:, 0], far[:, 0]
    v, d = solution.v, solution.delta
    vi, vj = v[i], v[j]
    gm, tm = np.abs(yij), np.angle(yij)
    gs, ts = np.abs(yii), np.angle(yii)
    a = d[i] - d[j] - tm
    sin_a, cos_a = np.sin(a), np.cos(a)

    out = np.zeros((2 * b, 2 * n))
    rows = np.arange(b)
    # active rows
    np.add.at(out, (rows, i), -vi * vj * gm * sin_a)
    np.add.at(out, (rows, j), vi * vj * gm * sin_a)
    np.add.at(out, (rows, n + i), 2 * vi * gs * np.cos(ts) + vj * gm * cos_a)
    np.add.at(out, (rows, n + j), vi * gm * cos_a)
    # reactive rows
    rq = rows + b
    np.add.at(out, (rq, i), vi * vj * gm * cos_a)
    np.add.at(out, (rq, j), -vi * vj * gm * cos_a)
    np.add.at(out, (rq, n + i), -2 * vi * gs * np.sin(ts) + vj * gm * sin_a)
    np.add.at(out, (rq, n + j), vi * gm * sin_a)
    return out


def transform_to_injection_ptdf(PQ_T_DV: np.ndarray, J_inv_full: np.ndarray):
    """Map branch-terminal sensitivities onto bus injections.

    Returns ``(PQ_T_PQ, PQ_T_P, PQ_T_Q)``.
    """
    if PQ_T_DV.shape[1] != J_inv_full.shape[0] or J_inv_full.shape[0] != J_inv_full.shape[1]:
        raise ValueError(f"dimension mismatch: {PQ_T_DV.shape} x {J_inv_full.shape}")
    n = J_inv_full.shape[0] // 2
    PQ_T_PQ = PQ_T_DV @ J_inv_full
    return PQ_T_PQ, PQ_T_PQ[:, :n], PQ_T_PQ[:, n:]


def incidence_matrices(case: GridCase):
    """Branch-node incidence split by terminal: ``(C_from, C_to)``, each ``b x n``."""
    f, t, *_ = case.branch_arrays()
    b, n = case.n_branch, case.n_bus
    C_from = np.zeros((b, n))
    C_to = np.zeros((b, n))
    C_from[np.arange(b), f] = 1.0
    C_to[np.arange(b), t] = 1.0
    return C_from, C_to


def current_sensitivities(solution: PowerFlowSolution, case: GridCase, i_floor: float = CURRENT_FLOOR):
    """Relative terminal current sensitivities ``d(|i|/i_0)/d(delta, v)``.

    Terminal-level partials (each terminal current depends on its own and the
    far-end voltage) are mapped onto bus columns through the incidence matrices.

    Returns
    -------
    ID_TB, IU_TB : ndarray, shape (2b, n)
        Rows of terminals with ``i_0 <= i_floor`` are zero.
    valid : ndarray of bool, shape (2b,)
        False for the excluded zero-current terminals.
    """
    V = solution.phasors
    self_y, mutual_y, near, far = _branch_terminal_admittances(case)
    I = self_y * V[near] + mutual_y * V[far]   # (b, 2)
    i0 = np.abs(I)
    valid = i0 > i_floor
    safe = np.where(valid, i0, 1.0)
    Ic = np.conj(I)
    u_near = np.exp(1j * solution.delta[near])
    u_far = np.exp(1j * solution.delta[far])
    # d|I|/dx = Re(conj(I) dI/dx) / |I|; divided once more by i_0 for the relative form
    scale = np.where(valid, 1.0 / safe ** 2, 0.0)
    dd_near = np.real(Ic * 1j * self_y * V[near]) * scale
    dd_far = np.real(Ic * 1j * mutual_y * V[far]) * scale
    dv_near = np.real(Ic * self_y * u_near) * scale
    dv_far = np.real(Ic * mutual_y * u_far) * scale

    C_from, C_to = incidence_matrices(case)
    # from-terminal rows: near = from bus, far = to bus; to-terminal rows: swapped
    ID_TB = np.vstack([dd_near[:, [0]] * C_from + dd_far[:, [0]] * C_to,
                       dd_near[:, [1]] * C_to + dd_far[:, [1]] * C_from])
    IU_TB = np.vstack([dv_near[:, [0]] * C_from + dv_far[:, [0]] * C_to,
                       dv_near[:, [1]] * C_to + dv_far[:, [1]] * C_from])
    return ID_TB, IU_TB, np.concatenate([valid[:, 0], valid[:, 1]])


def compute_sensitivities(solution: PowerFlowSolution, case: GridCase) -> SensitivityBundle:
    J = build_jacobian(solution, case)
    J_inv_full = invert_jacobian(J, case)
    PQ_T_DV = branch_terminal_sensitivities(solution, case)
    PQ_T_PQ, PQ_T_P, PQ_T_Q = transform_to_injection_ptdf(PQ_T_DV, J_inv_full)
    ID_TB, IU_TB, valid = current_sensitivities(solution, case)
    return SensitivityBundle(J, J_inv_full, PQ_T_DV, PQ_T_PQ, PQ_T_P, PQ_T_Q,
                             ID_TB, IU_TB, valid, solution)
