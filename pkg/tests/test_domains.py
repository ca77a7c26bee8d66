import numpy as np
import pytest

from decpi import DOMAINS, builtin_domain
from decpi.exceptions import DecPomdpError


@pytest.mark.parametrize("name,states,actions,observations", [
    ("dec-tiger", 2, 3, 2),
    ("meeting-grid", 16, 5, 4),
    ("box-pushing", 100, 4, 5),
    ("correlation-example", 2, 2, 1),
])
def test_dimensions(name, states, actions, observations):
    m = builtin_domain(name)
    assert m.n_states == states
    assert m.n_actions == (actions, actions)
    assert m.n_observations == (observations, observations)
    assert m.discount == 0.9


@pytest.mark.parametrize("name", DOMAINS)
def test_tables_are_stochastic(name):
    m = builtin_domain(name)
    np.testing.assert_allclose(m.transition.sum(axis=2), 1.0, atol=1e-9)
    np.testing.assert_allclose(m.observation.sum(axis=2), 1.0, atol=1e-9)
    assert m.initial_belief.sum() == pytest.approx(1.0)


def test_tiger_reward_anchors():
    m = builtin_domain("dec-tiger")
    listen = m.joint_action_index([2, 2])
    assert np.all(m.reward[:, listen] == -2.0)
    open_left = m.joint_action_index([0, 0])
    assert m.reward[:, open_left] @ m.initial_belief == pytest.approx(-15.0)


def test_correlation_example_uniform_play_costs_half_r():
    m = builtin_domain("correlation-example", R=10.0)
    per_step = m.reward.mean(axis=1)
    np.testing.assert_allclose(per_step, [-5.0, -5.0])


def test_unknown_domain_and_parameter():
    with pytest.raises(DecPomdpError):
        builtin_domain("no-such-problem")
    with pytest.raises((DecPomdpError, TypeError)):
        builtin_domain("dec-tiger", R=3.0)
