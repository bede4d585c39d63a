import json

import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from optvisit import VisitingValueSolver
from optvisit.estimator import as_scenario


def test_params_roundtrip():
    est = VisitingValueSolver(nx=11, nt=7)
    params = est.get_params()
    assert params["nx"] == 11 and params["nt"] == 7 and params["stop_tol"] is None
    est.set_params(nx=13)
    assert clone(est).get_params()["nx"] == 13


def test_not_fitted():
    with pytest.raises(NotFittedError):
        VisitingValueSolver().predict([[0.1, 0.1, 0.0]])


def test_fit_predict(eikonal_doc):
    est = VisitingValueSolver(nx=21, nt=20).fit(eikonal_doc)
    out = est.predict([[0.5, 0.1, 0.0], [0.5, 0.3, 0.5]])
    np.testing.assert_allclose(out, [0.3, 0.1], atol=0.02)
    assert est.predict([[0.5, 0.3, 0.5]], p="1").tolist() == [0.0]
    assert est.obstacle([[0.5, 0.1, 0.0]]).shape == (1,)
    assert est.validation_.ok


def test_accepts_json_text(eikonal_doc):
    est = VisitingValueSolver(nx=11, nt=5).fit(json.dumps(eikonal_doc))
    assert est.n_targets_ == 1


def test_rejects_bad_input(eikonal_doc):
    with pytest.raises(TypeError):
        as_scenario(3)
    est = VisitingValueSolver(nx=11, nt=5).fit(eikonal_doc)
    with pytest.raises(ValueError):
        est.predict([[0.1, 0.2]])
    with pytest.raises(ValueError):
        est.predict([[0.1, np.nan, 0.0]])


def test_plan_and_decide(eikonal_doc):
    est = VisitingValueSolver(nx=21, nt=20).fit(eikonal_doc)
    assert est.decide([0.5, 0.5], 0.0).kind == "switch"
    plan = est.plan([0.1, 0.5])
    assert len(plan.switches) == 1
