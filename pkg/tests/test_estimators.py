import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from flexagg.estimators import ACPowerFlow, ACPTDF, FORAggregator
from flexagg.grid_model import CaseError


def test_power_flow_estimator(case5, sol5):
    est = ACPowerFlow(tolerance=1e-12).fit(case5)
    np.testing.assert_allclose(est.transform()[:, 0], sol5.v, atol=1e-10)
    assert est.get_params() == {"tolerance": 1e-12, "max_iter": 20}


def test_ptdf_predict_matches_bundle(case34, bundle34):
    est = ACPTDF(tolerance=1e-12).fit(case34)
    X = np.zeros((2, 2 * case34.n_bus))
    X[0, 16] = 0.01
    X[1, case34.n_bus + 16] = 0.01
    out = est.predict(X)
    assert out.shape == (2, 3, 2)
    rows = bundle34.interconnection_rows(case34)
    np.testing.assert_allclose(out[1, :, 1], 0.01 * bundle34.PQ_T_Q[rows[3:], 16], atol=1e-12)
    with pytest.raises(ValueError):
        est.predict(np.zeros((1, 5)))


def test_not_fitted():
    with pytest.raises(NotFittedError):
        ACPTDF().predict(np.zeros((1, 4)))


def test_rejects_non_case():
    with pytest.raises(TypeError):
        ACPowerFlow().fit(np.zeros((3, 3)))


def test_rejects_invalid_case(case5):
    bad = case5.with_flexibilities([case5.flexibilities[0].__class__(3, 0.1, 0.2, 0, 0)])
    with pytest.raises(CaseError):
        ACPowerFlow().fit(bad)


def test_for_aggregator_clone_and_fit(case5):
    est = FORAggregator(q_thresh_pos=0.1, q_thresh_neg=-0.1, k_max=3)
    twin = clone(est)
    assert twin.get_params() == est.get_params()
    twin.set_params(k_max=2).fit(case5)
    polys = twin.transform()
    assert len(polys) == 1 and polys[0].shape[1] == 2
    assert twin.areas()[0] > 0
