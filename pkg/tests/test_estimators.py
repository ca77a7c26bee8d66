import numpy as np
import pytest
from sklearn.base import clone

from decpi import BoundedPolicyIteration, HeuristicPolicyIteration, PolicyIteration, \
    builtin_domain
from decpi.estimators import CapacityWarning
from decpi.exceptions import DecPomdpError


def test_params_and_clone():
    est = PolicyIteration(epsilon=0.5, max_iter=1)
    assert est.get_params()["epsilon"] == 0.5
    other = clone(est).set_params(vpt_slack=0.2)
    assert other.vpt_slack == 0.2 and est.vpt_slack == 0.0


def test_policy_iteration_fit():
    m = builtin_domain("dec-tiger")
    est = PolicyIteration(max_iter=2).fit(m)
    assert est.value_ == pytest.approx(-117.8525)
    assert est.controller_.sizes == (15, 15)
    assert est.termination_ == "max-iterations"
    assert len(est.log_) == 3


def test_capacity_warning_keeps_partial():
    m = builtin_domain("dec-tiger")
    with pytest.warns(CapacityWarning):
        est = PolicyIteration(max_nodes=20).fit(m)
    assert est.controller_.sizes == (3, 3) and est.termination_ == "capacity"


def test_heuristic_fit():
    est = HeuristicPolicyIteration(k=10, seed=0, max_iter=2).fit(builtin_domain("dec-tiger"))
    assert est.value_ == pytest.approx(-117.8525, abs=1e-6)


def test_bounded_fit_is_seeded():
    m = builtin_domain("dec-tiger")
    a = BoundedPolicyIteration(sizes=2, steps=10, restarts=3, seed=1).fit(m)
    b = BoundedPolicyIteration(sizes=2, steps=10, restarts=3, seed=1).fit(m)
    np.testing.assert_array_equal(a.traces_, b.traces_)
    assert a.traces_.shape == (3, 11)
    assert a.value_ == a.run_values_.max()


def test_bad_inputs():
    with pytest.raises(DecPomdpError):
        PolicyIteration().fit("not a model")
    with pytest.raises(DecPomdpError):
        BoundedPolicyIteration(sizes=(1, 2, 3)).fit(builtin_domain("dec-tiger"))
    with pytest.raises(DecPomdpError):
        PolicyIteration(vpt_slack=-1).fit(builtin_domain("dec-tiger"))
