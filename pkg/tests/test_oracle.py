import numpy as np
import pytest

from decpi import builtin_domain, evaluate, make_initial, random_stochastic, value_at_belief
from decpi.domains import correlation_example_controllers
from decpi.exceptions import CapacityError
from decpi.model import random_decpomdp
from decpi.oracle import (best_tree_value, memoryless_independent_search, memoryless_value,
                          monte_carlo_value, tree_count)
from decpi.solver import exhaustive_backup


def test_tree_counts():
    assert tree_count(3, 2, 0, 1) == 1
    assert tree_count(3, 2, 1, 1) == 3
    assert tree_count(3, 2, 2, 1) == 27
    assert tree_count(3, 2, 1, 2) == 12


def test_depth_zero_is_tail_value():
    rng = np.random.default_rng(0)
    m = random_decpomdp(2, (2, 2), (2, 2), rng)
    tail = random_stochastic(m, (2, 2), 1, rng)
    b = np.array([0.3, 0.7])
    assert best_tree_value(m, tail, 0, b) == pytest.approx(
        value_at_belief(evaluate(m, tail), b)[0], abs=1e-10)


def test_tiger_depth_one_matches_backup():
    m = builtin_domain("dec-tiger")
    tail = make_initial(m, [0, 0])
    vt = evaluate(m, exhaustive_backup(m, tail))
    assert best_tree_value(m, tail, 1, m.initial_belief) == pytest.approx(
        value_at_belief(vt, m.initial_belief)[0], abs=1e-8)


def test_tree_cap():
    m = builtin_domain("dec-tiger")
    with pytest.raises(CapacityError):
        best_tree_value(m, make_initial(m, [0, 0]), 2, m.initial_belief, cap=10)


def test_monte_carlo_tiger():
    m = builtin_domain("dec-tiger")
    mean, se = monte_carlo_value(m, make_initial(m, [0, 0]), m.initial_belief, (0, 0, 0),
                                 episodes=20_000, horizon=200, seed=0)
    assert abs(mean + 150.0) <= 3 * se


def test_monte_carlo_myopic():
    rng = np.random.default_rng(1)
    m = random_decpomdp(2, (2, 2), (2, 2), rng, discount=0.0)
    jc = random_stochastic(m, (1, 1), 1, rng)
    exact = value_at_belief(evaluate(m, jc), m.initial_belief)[0]
    mean, se = monte_carlo_value(m, jc, m.initial_belief, (0, 0, 0), episodes=50_000, seed=2)
    assert abs(mean - exact) <= 3 * se


def test_monte_carlo_alternating():
    m = builtin_domain("correlation-example")
    jc = correlation_example_controllers(m)["alternating"]
    mean, se = monte_carlo_value(m, jc, 0, (0, 0, 0), episodes=2000, seed=0)
    assert mean == pytest.approx(100.0, abs=3 * se + 1e-3)


def test_monte_carlo_is_seeded():
    m = builtin_domain("dec-tiger")
    jc = make_initial(m, [2, 2])
    a = monte_carlo_value(m, jc, m.initial_belief, (0, 0, 0), episodes=500, seed=5)
    b = monte_carlo_value(m, jc, m.initial_belief, (0, 0, 0), episodes=500, seed=5)
    assert a == b


def test_memoryless_search():
    m = builtin_domain("correlation-example")
    best, policies = memoryless_independent_search(m, resolution=0.01)
    assert best <= -49.5
    assert memoryless_value(m, policies).min() == pytest.approx(best)
    corr = evaluate(m, correlation_example_controllers(m)["correlated"]).values
    assert corr[:, :, 0, 0].mean(axis=1).min() > best


def test_memoryless_single_action():
    rng = np.random.default_rng(3)
    m = random_decpomdp(2, (1, 1), (1, 1), rng)
    best, _ = memoryless_independent_search(m, resolution=0.5)
    v = evaluate(m, make_initial(m, [0, 0])).values[:, 0, 0, 0]
    assert best == pytest.approx(v.min())
