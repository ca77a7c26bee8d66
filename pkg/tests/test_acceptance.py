"""Acceptance suite: one test per criterion, each reporting a pass/fail line."""

import numpy as np
import pytest

from decpi import BoundedPolicyIteration, builtin_domain, evaluate, make_initial, value_at_belief
from decpi.controller import random_stochastic
from decpi.domains import correlation_example_controllers
from decpi.exceptions import CapacityError
from decpi.heuristic import heuristic_policy_iteration
from decpi.oracle import best_tree_value, memoryless_independent_search
from decpi.solver import exhaustive_backup, exhaustive_backup_size, policy_iteration
from decpi.transform import bounded_backup_device, bounded_backup_local, reduce_device_node, \
    reduce_local_node

from conftest import small_random

pytestmark = pytest.mark.slow


def _note(record_property, num, detail):
    record_property("criterion", num)
    record_property("detail", detail)


def test_c01_tiger_exact_policy_iteration(tiger_exact, record_property):
    _, log = tiger_exact
    v, sizes = log.values, log.sizes
    _note(record_property, 1, f"V={np.round(v, 4).tolist()} sizes={sizes}")
    assert len(v) == 4
    assert v[0] == pytest.approx(-150.0, abs=1e-6)
    for got, target in zip(v[1:], (-137.0, -117.8, -98.9)):
        assert target <= got <= target + 2.0
    assert all(s <= 3 for s in sizes[1])
    assert sizes[2] == (15, 15)
    assert all(s <= 255 for s in sizes[3])


def test_c02_tiger_bounded_updates(tiger, record_property):
    _, log = policy_iteration(tiger, make_initial(tiger, [0, 0]), 0.1,
                              bounded_updates=True, max_iter=2)
    best = BoundedPolicyIteration(sizes=4, steps=200, restarts=20, seed=0).fit(tiger)
    _note(record_property, 2, f"PI+bounded V={np.round(log.values, 4).tolist()} "
                              f"bounded-only best={best.value_:.4f}")
    assert best.value_ == pytest.approx(-20.0, abs=0.5)
    for got in log.values[1:]:
        assert got == pytest.approx(-20.0, abs=0.5)


def test_c03_exhaustive_size_bookkeeping(tiger_exact, record_property):
    _, log = tiger_exact
    tiger_chain = [r.exhaustive_sizes[0] for r in log.records]

    def chain(model, t):
        n, out = 1, [1]
        for _ in range(t):
            n = exhaustive_backup_size(model.n_actions[0], n, model.n_observations[0])
            out.append(n)
        return out

    grid, box = builtin_domain("meeting-grid"), builtin_domain("box-pushing")
    _, grid_log = policy_iteration(grid, make_initial(grid, [0, 0]), 0.1, max_iter=1)
    _, box_log = policy_iteration(box, make_initial(box, [0, 0]), 0.1, max_iter=1)
    _note(record_property, 3, f"tiger {tiger_chain} grid {chain(grid, 2)} box {chain(box, 2)}")
    assert tiger_chain == [1, 3, 27, 2187]
    assert all(r.exhaustive_sizes == (n, n) for r, n in zip(log.records, tiger_chain))
    assert chain(grid, 2) == [1, 5, 3125]
    assert chain(box, 2) == [1, 4, 4096]
    assert grid_log.records[1].exhaustive_sizes == (5, 5)
    assert box_log.records[1].exhaustive_sizes == (4, 4)


def test_c04_iteration_zero_values(record_property):
    out = {}
    for name in ("box-pushing", "meeting-grid"):
        m = builtin_domain(name)
        _, log = policy_iteration(m, make_initial(m, [0, 0]), 0.1, max_iter=0)
        out[name] = log.values[0]
    _note(record_property, 4, f"box {out['box-pushing']:.6f} grid {out['meeting-grid']:.6f}")
    assert out["box-pushing"] == pytest.approx(-2.0, abs=1e-6)
    assert out["meeting-grid"] == pytest.approx(2.8, abs=0.3)


def test_c05_correlation_example(record_property):
    m = builtin_domain("correlation-example", R=10.0, discount=0.9)
    best, _ = memoryless_independent_search(m, resolution=0.01)
    ctl = correlation_example_controllers(m)
    corr = evaluate(m, ctl["correlated"]).values[:, :, 0, 0]
    # the device's first signal is drawn from its stationary (uniform) law
    corr_v = corr @ np.full(2, 0.5)
    alt = evaluate(m, ctl["alternating"]).values[0, 0, 0, 0]
    _note(record_property, 5, f"memoryless {best:.4f} correlated {corr_v.tolist()} "
                              f"alternating {alt:.6f}")
    assert best <= -49.5
    assert np.all(np.abs(corr_v) <= 1e-8)
    assert alt == pytest.approx(100.0, abs=1e-8)


def _oracle_gap(model, rng, depth, n_beliefs=20):
    jc = make_initial(model, [0] * model.n_agents)
    backed = jc
    for _ in range(depth):
        backed = exhaustive_backup(model, backed)
    vt = evaluate(model, backed)
    gap = 0.0
    for _ in range(n_beliefs):
        b = rng.dirichlet(np.ones(model.n_states))
        gap = max(gap, abs(best_tree_value(model, jc, depth, b) - value_at_belief(vt, b)[0]))
    return gap


def test_c06_oracle_equivalence(tiger, record_property):
    rng = np.random.default_rng(6)
    worst = 0.0
    for seed in range(20):
        m = small_random(seed)
        for depth in (1, 2):
            worst = max(worst, _oracle_gap(m, rng, depth))
    tiger_gap = max(_oracle_gap(tiger, rng, d) for d in (1, 2))
    _note(record_property, 6, f"random max gap {worst:.2e} tiger max gap {tiger_gap:.2e}")
    assert worst <= 1e-8
    assert tiger_gap <= 1e-8


def _geq(new, old, tol=1e-7):
    return bool(np.all(new >= old - tol))


def test_c07_value_preservation(record_property):
    checked_red = checked_bb = 0
    worst_eps = np.inf
    for seed in range(50):
        m = small_random(100 + seed)
        rng = np.random.default_rng(seed)
        jc = exhaustive_backup(m, random_stochastic(m, (2, 2), 2, rng))
        vt = evaluate(m, jc)
        # reductions: the surviving entries never decrease
        for c in reversed(range(jc.device_size)):
            if jc.device_size > 1:
                out = reduce_device_node(m, jc, vt, c)
                if out is not None:
                    new = evaluate(m, out[0])
                    assert _geq(new.values, np.delete(vt.values, c, axis=1))
                    jc, vt, checked_red = out[0], new, checked_red + 1
        for i in range(jc.n_agents):
            for q in reversed(range(jc.sizes[i])):
                if jc.sizes[i] > 1:
                    out = reduce_local_node(m, jc, vt, i, q)
                    if out is not None:
                        new = evaluate(m, out[0])
                        assert _geq(new.values, np.delete(vt.values, q, axis=2 + i))
                        jc, vt, checked_red = out[0], new, checked_red + 1
        # bounded backups: every entry weakly improves
        for c in range(jc.device_size):
            jc2, wit = bounded_backup_device(m, jc, vt, c)
            new = evaluate(m, jc2)
            assert _geq(new.values, vt.values)
            worst_eps = min(worst_eps, wit.epsilon)
            jc, vt, checked_bb = jc2, new, checked_bb + 1
        for i in range(jc.n_agents):
            for q in range(jc.sizes[i]):
                jc2, wit = bounded_backup_local(m, jc, vt, i, q)
                new = evaluate(m, jc2)
                assert _geq(new.values, vt.values)
                worst_eps = min(worst_eps, wit.epsilon)
                jc, vt, checked_bb = jc2, new, checked_bb + 1
    _note(record_property, 7, f"{checked_red} reductions, {checked_bb} bounded backups, "
                              f"min eps* {worst_eps:.2e}")
    assert checked_red > 0 and checked_bb > 0
    assert worst_eps >= -1e-9


def test_c08_pi_dominates_bare_backups(record_property):
    worst = np.inf
    for seed in range(20):
        m = small_random(seed)
        jc0 = make_initial(m, [0, 0])
        _, log = policy_iteration(m, jc0, 1e-9, max_iter=2)
        bare = jc0
        for t in (1, 2):
            bare = exhaustive_backup(m, bare)
            v_bare = value_at_belief(evaluate(m, bare), m.initial_belief)[0]
            worst = min(worst, log.values[t] - v_bare)
    _note(record_property, 8, f"min PI minus bare-backup value {worst:.2e}")
    assert worst >= -1e-7


def test_c09_heuristic_parity_and_gain(tiger, tiger_exact, record_property):
    _, exact_log = tiger_exact
    with pytest.raises(CapacityError) as info:
        policy_iteration(tiger, make_initial(tiger, [0, 0]), 0.1, max_nodes=300)
    capped_exact = info.value.partial[1]
    try:
        _, hlog = heuristic_policy_iteration(tiger, k=10, seed=0, max_nodes=300, max_iter=5)
    except CapacityError as exc:
        hlog = exc.partial[1]
    both = min(len(hlog), len(exact_log))
    gap = max(abs(a - b) for a, b in zip(hlog.values[:both], exact_log.values[:both]))
    _note(record_property, 9, f"parity gap {gap:.2e} over {both} iterations; capped "
                              f"iterations HPI {len(hlog) - 1} vs PI {len(capped_exact) - 1}; "
                              f"final HPI {hlog.values[-1]:.4f} PI {capped_exact.values[-1]:.4f}")
    assert gap <= 1e-6
    assert len(hlog) >= len(capped_exact) + 1
    assert hlog.values[-1] >= capped_exact.values[-1]


def test_c10_epsilon_slack(tiger, record_property):
    jc0 = make_initial(tiger, [0, 0])
    _, exact = policy_iteration(tiger, jc0, 0.1, max_iter=2)
    _, slack = policy_iteration(tiger, jc0, 0.1, vpt_slack=0.1, max_iter=2)
    bound = 0.1 * tiger.discount / (1 - tiger.discount)
    _note(record_property, 10, f"slack V {slack.values[-1]:.4f} sizes {slack.sizes[-1]}; "
                               f"exact V {exact.values[-1]:.4f} sizes {exact.sizes[-1]}")
    assert slack.values[-1] >= exact.values[-1] - bound - 1e-6
    assert all(a <= b for a, b in zip(slack.sizes[-1], exact.sizes[-1]))
