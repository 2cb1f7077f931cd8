import numpy as np
import pytest
from conftest import small_neighborhood
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from cohem._validation import InputError
from cohem.estimators import (
    CoHEMScheduler,
    JointProcurementScheduler,
    SelfishHEM,
    UnscheduledBaseline,
    check_marks,
)
from cohem.experiments import eval_marks
from cohem.scenario import ScenarioConfig, synthesize


def test_params_round_trip_through_clone():
    est = CoHEMScheduler(iterations=5, psi=2, defectors=(1,))
    params = est.get_params()
    assert params["iterations"] == 5 and params["defectors"] == (1,)
    assert clone(est).get_params() == params
    joint = JointProcurementScheduler(weight=3.0)
    assert clone(joint).get_params()["weight"] == 3.0


@pytest.mark.parametrize(
    "est",
    [UnscheduledBaseline(n_eval_samples=10), SelfishHEM(n_eval_samples=10),
     CoHEMScheduler(iterations=4, psi=2, n_samples=10, eval_every=2, n_eval_samples=10)],
)
def test_fit_predict_score(est):
    nb = small_neighborhood(H=3)
    assert est.fit(nb) is est
    marks = eval_marks(nb, 7, 0)
    loads = est.predict(marks)
    assert loads.shape == (7, nb.T)
    assert np.all(loads >= nb.U_total - 1e-12)
    assert est.transform(nb).shape == (nb.T,)
    assert est.score(nb) <= 0


def test_joint_scheduler_scores_against_its_own_bid():
    nb = synthesize(ScenarioConfig(H=2, bid_samples=5), 0)
    est = JointProcurementScheduler(iterations=3, psi=1, n_samples=5, eval_every=3, n_eval_samples=5).fit(nb)
    assert est.bid_.shape == (24,)
    np.testing.assert_array_equal(est._supply(nb), np.repeat(est.bid_, 4))


def test_unfitted_and_bad_input():
    with pytest.raises(NotFittedError):
        SelfishHEM().predict([])
    with pytest.raises(InputError):
        SelfishHEM().fit("not a neighborhood")
    nb = small_neighborhood(H=2)
    marks = eval_marks(nb, 3, 0)
    with pytest.raises(InputError):
        check_marks(marks[:1], nb)
    marks[0][0] = marks[0][0] + 10
    with pytest.raises(InputError):
        check_marks(marks, nb)
