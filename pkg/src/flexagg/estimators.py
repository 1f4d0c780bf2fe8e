"""Estimator-style wrappers around the functional core.

``fit`` takes a :class:`~flexagg.grid_model.GridCase` rather than a feature
matrix; array inputs to ``predict`` are validated with scikit-learn helpers.
"""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_array, check_is_fitted

from .for_engine import Scenario, extract_boundaries, run_for_determination
from .grid_model import CaseError, GridCase, validate_case
from .powerflow import interconnection_flows, solve_newton_raphson
from .sensitivity import compute_sensitivities


def _check_case(case):
    if not isinstance(case, GridCase):
        raise TypeError(f"expected a GridCase, got {type(case).__name__}")
    problems = validate_case(case)
    if problems:
        raise CaseError("invalid case", problems)
    return case


class ACPowerFlow(BaseEstimator):
    """Newton-Raphson power flow.

    Attributes
    ----------
    solution_ : PowerFlowSolution
    """

    def __init__(self, tolerance=1e-8, max_iter=20):
        self.tolerance = tolerance
        self.max_iter = max_iter

    def fit(self, case, y=None):
        self.case_ = _check_case(case)
        self.solution_ = solve_newton_raphson(case, tolerance=self.tolerance, max_iter=self.max_iter)
        return self

    def transform(self, case=None):
        """Stacked bus state ``[v, delta]`` of shape ``(n, 2)``."""
        check_is_fitted(self, "solution_")
        return np.column_stack([self.solution_.v, self.solution_.delta])


class ACPTDF(BaseEstimator):
    """Injection PTDFs linearized at the converged operating point.

    ``predict`` maps bus injection deviations onto interconnection flow
    deviations.

    Attributes
    ----------
    bundle_ : SensitivityBundle
    base_flows_ : ndarray, shape (ic, 2)
    """

    def __init__(self, tolerance=1e-8, max_iter=20):
        self.tolerance = tolerance
        self.max_iter = max_iter

    def fit(self, case, y=None):
        self.case_ = _check_case(case)
        sol = solve_newton_raphson(case, tolerance=self.tolerance, max_iter=self.max_iter)
        self.bundle_ = compute_sensitivities(sol, case)
        self.base_flows_ = interconnection_flows(sol, case)
        self.n_features_in_ = 2 * case.n_bus
        return self

    def predict(self, X):
        """Linearized interconnection ``(dp, dq)`` for each row ``[dp (n), dq (n)]`` of ``X``.

        Returns
        -------
        ndarray, shape (n_samples, ic, 2)
        """
        check_is_fitted(self, "bundle_")
        X = check_array(X, ensure_2d=True)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(f"X has {X.shape[1]} columns, expected {self.n_features_in_}")
        rows = self.bundle_.interconnection_rows(self.case_)
        out = X @ self.bundle_.PQ_T_PQ[rows].T
        ic = len(self.case_.interconnections)
        return np.stack([out[:, :ic], out[:, ic:]], axis=2)


class FORAggregator(BaseEstimator):
    """Sampled FOR determination for one prioritization scenario.

    Attributes
    ----------
    run_ : AggregationRun
    boundaries_ : list of FORBoundary
    """

    def __init__(self, priority_interconnection=0, weight_priority_q=-1.0, weight_other_q=0.1,
                 weight_dp=-1.0, q_thresh_pos=0.6, q_thresh_neg=-0.6, k_max=20, relinearize=True,
                 sign_consistent_q=True, name="scenario"):
        self.priority_interconnection = priority_interconnection
        self.weight_priority_q = weight_priority_q
        self.weight_other_q = weight_other_q
        self.weight_dp = weight_dp
        self.q_thresh_pos = q_thresh_pos
        self.q_thresh_neg = q_thresh_neg
        self.k_max = k_max
        self.relinearize = relinearize
        self.sign_consistent_q = sign_consistent_q
        self.name = name

    def _scenario(self):
        return Scenario(self.name, self.priority_interconnection, self.weight_priority_q,
                        self.weight_other_q, self.weight_dp, self.q_thresh_pos, self.q_thresh_neg)

    def fit(self, case, y=None):
        _check_case(case)
        self.run_ = run_for_determination(case, self._scenario(), self.k_max, self.relinearize,
                                          sign_consistent_q=self.sign_consistent_q)
        self.boundaries_ = extract_boundaries(self.run_)
        return self

    def transform(self, case=None):
        """Closed FOR polygons, one ``(k, 2)`` array per interconnection."""
        check_is_fitted(self, "boundaries_")
        return [b.polygon() for b in self.boundaries_]

    def areas(self) -> np.ndarray:
        check_is_fitted(self, "boundaries_")
        return np.array([b.area() for b in self.boundaries_])
