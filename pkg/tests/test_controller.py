import numpy as np
import pytest

from decpi import (CorrelationDevice, JointController, LocalController, builtin_domain,
                   config_context, evaluate, make_initial, random_deterministic,
                   random_stochastic, value_at_belief)
from decpi.controller import (ValueTable, bellman, evaluate_independent, merge_device_node,
                              merge_local_node, recurrent_nodes)
from decpi.exceptions import DecPomdpError
from decpi.model import random_decpomdp


def constant_reward_model(r, discount=0.9):
    rng = np.random.default_rng(1)
    m = random_decpomdp(2, (2, 2), (2, 2), rng, discount=discount)
    return type(m)(m.transition, m.observation, np.full_like(m.reward, r), discount,
                   m.initial_belief, m.n_actions, m.n_observations)


def test_geometric_series():
    m = constant_reward_model(3.0)
    vt = evaluate(m, make_initial(m, [1, 0]))
    np.testing.assert_allclose(vt.values, 30.0, atol=1e-9)


def test_tiger_open_left_is_minus_150():
    m = builtin_domain("dec-tiger")
    vt = evaluate(m, make_initial(m, [0, 0]))
    assert value_at_belief(vt, m.initial_belief) == (pytest.approx(-150.0, abs=1e-9), (0, 0, 0))


def test_box_pushing_turn_left_is_minus_2():
    m = builtin_domain("box-pushing")
    vt = evaluate(m, make_initial(m, [0, 0]))
    assert value_at_belief(vt, m.initial_belief)[0] == pytest.approx(-2.0, abs=1e-9)


def test_myopic_case():
    rng = np.random.default_rng(3)
    m = random_decpomdp(3, (2, 2), (2, 2), rng, discount=0.0)
    jc = random_stochastic(m, (2, 3), 2, rng)
    vt = evaluate(m, jc)
    for c in range(2):
        for q0 in range(2):
            for q1 in range(3):
                p = np.outer(jc.locals[0].psi[c, q0], jc.locals[1].psi[c, q1]).ravel()
                np.testing.assert_allclose(vt.values[:, c, q0, q1], m.reward @ p, atol=1e-12)


@pytest.mark.parametrize("seed", range(5))
def test_fixed_point_and_iterative_solver(seed):
    rng = np.random.default_rng(seed)
    m = random_decpomdp(3, (2, 2), (2, 2), rng)
    jc = random_stochastic(m, (3, 2), 2, rng)
    vt = evaluate(m, jc)
    psis = [lc.psi for lc in jc.locals]
    etas = [lc.eta for lc in jc.locals]
    again = bellman(m, jc.device.transition, psis, etas, vt.values)
    np.testing.assert_allclose(again, vt.values, atol=1e-8)
    with config_context(dense_limit=0):
        np.testing.assert_allclose(evaluate(m, jc).values, vt.values, atol=1e-6)


def test_independent_evaluation_matches_for_trivial_device():
    rng = np.random.default_rng(8)
    m = random_decpomdp(2, (2, 2), (2, 2), rng)
    jc = random_stochastic(m, (2, 2), 1, rng)
    np.testing.assert_allclose(evaluate_independent(m, jc), evaluate(m, jc).values,
                               atol=1e-9)


def test_tie_break_prefers_lowest_index():
    vt = ValueTable(np.zeros((2, 1, 2, 2)), 0.0)
    assert value_at_belief(vt, [0.5, 0.5])[1] == (0, 0, 0)
    vals = np.zeros((2, 1, 2, 2))
    vals[:, 0, 1, 0] = vals[:, 0, 0, 1] = 1.0
    assert value_at_belief(ValueTable(vals, 0.0), [1.0, 0.0]) == (1.0, (0, 0, 1))


def test_point_belief_reads_table():
    m = builtin_domain("dec-tiger")
    vt = evaluate(m, random_deterministic(m, (2, 2), 1, np.random.default_rng(0)))
    v, node = value_at_belief(vt, [0.0, 1.0])
    assert v == pytest.approx(vt.values[1].max())


def test_make_initial_shapes():
    m = builtin_domain("box-pushing")
    jc = make_initial(m, [0, 3])
    assert jc.sizes == (1, 1) and jc.device_size == 1
    assert jc.locals[1].psi[0, 0, 3] == 1.0
    with pytest.raises(DecPomdpError):
        make_initial(m, [0])
    with pytest.raises(DecPomdpError):
        make_initial(m, [0, 9])


def test_invalid_parameters_rejected():
    with pytest.raises(DecPomdpError):
        LocalController(np.full((1, 1, 2), 0.7), np.ones((1, 1, 2, 1, 1)))
    with pytest.raises(DecPomdpError):
        CorrelationDevice(np.ones((2, 3)) / 3)
    m = builtin_domain("dec-tiger")
    jc = make_initial(builtin_domain("box-pushing"), [0, 0])
    with pytest.raises(DecPomdpError):
        jc.check_model(m)


def test_merge_reroutes_incoming_mass():
    rng = np.random.default_rng(5)
    m = random_decpomdp(2, (2, 2), (2, 2), rng)
    jc = random_stochastic(m, (3, 2), 1, rng)
    dist = np.array([0.25, 0.75])
    new = merge_local_node(jc, 0, 1, dist)
    old_eta = jc.locals[0].eta
    expect = np.delete(old_eta, 1, axis=-1) + old_eta[..., 1:2] * dist
    expect = np.delete(expect, 1, axis=1)
    np.testing.assert_allclose(new.locals[0].eta, expect, atol=1e-12)
    assert new.sizes == (2, 2)


def test_merge_device_node():
    rng = np.random.default_rng(6)
    m = random_decpomdp(2, (2, 2), (2, 2), rng)
    jc = random_stochastic(m, (2, 2), 3, rng)
    new = merge_device_node(jc, 0, np.array([1.0, 0.0]))
    assert new.device_size == 2 and new.locals[0].n_device == 2
    np.testing.assert_allclose(new.device.transition.sum(axis=1), 1.0)


def test_recurrent_nodes():
    m = builtin_domain("dec-tiger")
    jc = make_initial(m, [0, 0])
    assert [list(r) for r in recurrent_nodes(jc)] == [[0], [0]]


def test_value_table_guard():
    m = builtin_domain("dec-tiger")
    jc = random_deterministic(m, (50, 50), 1, np.random.default_rng(0))
    with config_context(max_table_entries=100):
        with pytest.raises(Exception) as info:
            evaluate(m, jc)
    assert "large" in str(info.value) or "capacity" in type(info.value).__name__.lower()


def test_joint_controller_equality():
    m = builtin_domain("dec-tiger")
    a = make_initial(m, [0, 1])
    b = make_initial(m, [0, 1])
    assert a == b and a.allclose(b)
    assert a != make_initial(m, [1, 1])
    assert isinstance(a, JointController)
