"""Independent checks: brute-force policy trees, Monte-Carlo simulation of a
controller, and a grid search over memoryless independent policies."""

import math
from itertools import product

import numpy as np

from ._validation import check_belief
from .controller import evaluate
from .exceptions import CapacityError, DecPomdpError

TREE_CAP = 10**6


def tree_count(n_actions, n_observations, depth, n_tail):
    """Deterministic depth-``depth`` trees for one agent whose leaves pick a tail node.

    ``|A| ** ((|O|**t - 1) / (|O| - 1)) * n_tail ** (|O|**t)``; depth 0 trees
    are just the tail nodes.
    """
    if depth < 0:
        raise DecPomdpError("depth must be non-negative")
    if n_observations == 1:
        internal = depth
    else:
        internal = (n_observations ** depth - 1) // (n_observations - 1)
    return n_actions ** internal * n_tail ** (n_observations ** depth)


def _agent_trees(model, agent, depth, n_tail):
    """All trees of one agent, as (root action, children) tuples; leaves are tail nodes."""
    if depth == 0:
        return list(range(n_tail))
    sub = _agent_trees(model, agent, depth - 1, n_tail)
    no = model.n_observations[agent]
    return [(a, kids) for a in range(model.n_actions[agent]) for kids in product(sub, repeat=no)]


def best_tree_value(model, tail, depth, belief, cap=TREE_CAP):
    """Best value at ``belief`` over all joint deterministic depth-``depth``
    policy trees whose leaves start the ``tail`` controller in some node.

    Computed by full expectation; the device node is maximized over together
    with the trees.
    """
    b = check_belief(belief, model.n_states)
    tail.check_model(model)
    counts = [tree_count(model.n_actions[i], model.n_observations[i], depth, tail.sizes[i])
              for i in range(model.n_agents)]
    if math.prod(counts) > cap:
        raise CapacityError(f"{math.prod(counts)} joint trees exceed the cap of {cap}")
    vt = evaluate(model, tail)
    device = tail.device.transition
    per_agent = [_agent_trees(model, i, depth, tail.sizes[i]) for i in range(model.n_agents)]
    best = -np.inf
    memo = {}
    for joint in product(*per_agent):
        v = _cached_value(model, device, vt.values, joint, depth, memo)
        best = max(best, float(np.max(b @ v)))
    return best


def _cached_value(model, device, values, trees, depth, memo):
    key = (depth, trees)
    if key in memo:
        return memo[key]
    if depth == 0:
        v = values[(slice(None), slice(None)) + tuple(trees)]
    else:
        ja = model.joint_action_index([t[0] for t in trees])
        to = model.trans_obs()
        v = np.repeat(model.reward[:, ja][:, None], device.shape[0], axis=1)
        for jo, obs in enumerate(model.joint_observations()):
            m = to[ja, jo]
            if not m.any():
                continue
            kids = tuple(t[1][o] for t, o in zip(trees, obs))
            nxt = _cached_value(model, device, values, kids, depth - 1, memo)
            v = v + model.discount * (m @ nxt @ device.T)
    memo[key] = v
    return v


def monte_carlo_value(model, jc, start, joint_node, episodes=10_000, horizon=None,
                      seed=None):
    """Sampled discounted return of ``jc`` started in ``joint_node`` = (c, q_0, ...).

    ``start`` is a state index or a belief. With ``horizon=None`` the episode
    length is chosen so the truncated tail is below 1e-3 in value. Returns
    ``(mean, stderr)``; every episode is simulated in lockstep.
    """
    jc.check_model(model)
    rng = np.random.default_rng(seed)
    if np.ndim(start) == 0:
        b = np.zeros(model.n_states)
        b[int(start)] = 1.0
    else:
        b = check_belief(start, model.n_states)
    beta = model.discount
    if horizon is None:
        horizon = _horizon(beta, model.r_max, 1e-3)
    n = jc.n_agents
    c = np.full(episodes, int(joint_node[0]))
    q = [np.full(episodes, int(joint_node[1 + i])) for i in range(n)]
    s = _sample_rows(rng, np.tile(b, (episodes, 1)))
    ret = np.zeros(episodes)
    disc = 1.0
    obs_sizes = model.n_observations
    act_sizes = model.n_actions
    dev = jc.device.transition
    for _ in range(horizon):
        acts = [_sample_rows(rng, jc.locals[i].psi[c, q[i]]) for i in range(n)]
        ja = np.ravel_multi_index(acts, act_sizes)
        ret += disc * model.reward[s, ja]
        s2 = _sample_rows(rng, model.transition[s, ja])
        jo = _sample_rows(rng, model.observation[ja, s2])
        obs = np.unravel_index(jo, obs_sizes)
        c2 = _sample_rows(rng, dev[c])
        q = [_sample_rows(rng, jc.locals[i].eta[c, q[i], acts[i], obs[i]]) for i in range(n)]
        s, c = s2, c2
        disc *= beta
        if disc == 0.0:
            break
    return float(ret.mean()), float(ret.std(ddof=1) / np.sqrt(episodes))


def _horizon(beta, r_max, tol):
    if beta == 0.0 or r_max == 0.0:
        return 1
    # beta**h * r_max / (1 - beta) <= tol
    return max(1, math.ceil(math.log(tol * (1 - beta) / r_max) / math.log(beta)))


def _sample_rows(rng, probs):
    """One categorical draw per row of ``probs``."""
    cdf = np.cumsum(probs, axis=-1)
    u = rng.random(cdf.shape[0]) * cdf[:, -1]
    return np.minimum((cdf < u[:, None]).sum(axis=1), probs.shape[-1] - 1)


def memoryless_value(model, policies):
    """Exact per-state value of independent stationary policies ``policies[i][a]``."""
    p = np.ones(1)
    for pi in policies:
        p = np.outer(p, pi).ravel()
    r = model.reward @ p
    t = np.einsum("sat,a->st", model.transition, p)
    return np.linalg.solve(np.eye(model.n_states) - model.discount * t, r)


def memoryless_independent_search(model, resolution=0.01):
    """Grid search over independent memoryless policies of two agents.

    Each agent's action distribution ranges over the simplex grid with step
    ``resolution``. Returns ``(best worst-state value, (policy_0, policy_1))``
    maximizing the minimum over states.
    """
    if model.n_agents != 2:
        raise DecPomdpError("memoryless search is defined for two agents")
    steps = round(1.0 / resolution)
    if not math.isclose(steps * resolution, 1.0, rel_tol=1e-9):
        raise DecPomdpError("resolution must divide 1")
    grids = [_simplex_grid(n, steps) for n in model.n_actions]
    best, arg = -np.inf, None
    for p0 in grids[0]:
        for p1 in grids[1]:
            worst = float(np.min(memoryless_value(model, (p0, p1))))
            if worst > best:
                best, arg = worst, (p0, p1)
    return best, arg


def _simplex_grid(n, steps):
    if n == 1:
        return [np.ones(1)]
    pts = []
    for combo in product(range(steps + 1), repeat=n - 1):
        if sum(combo) <= steps:
            pts.append(np.array(list(combo) + [steps - sum(combo)], dtype=float) / steps)
    return pts
