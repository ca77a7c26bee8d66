"""Value-preserving transformations: controller reductions (merge a dominated
node into a convex combination of its peers) and bounded backups (re-solve
one node's parameters against the frozen value function)."""

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from ._config import get_config
from ._validation import check_index
from .controller import (
    CorrelationDevice,
    JointController,
    LocalController,
    ValueTable,
    _contract_axis,
    _action_obs_pairs,
    _outer,
    bellman,
    evaluate,
    merge_device_node,
    merge_local_node,
    random_deterministic,
    value_at_belief,
)
from .exceptions import DecPomdpError
from .exceptions import SolverError
from .lp import max_epsilon, max_total_gain, mixture_epsilon


@dataclass(frozen=True)
class DominanceWitness:
    """A node and the convex combination of its peers that replaces it.

    ``target`` is ``("agent", i, node)`` or ``("device", node)``.
    ``distribution`` is indexed by the surviving nodes in their new order.
    """

    target: tuple
    distribution: np.ndarray
    epsilon: float


@dataclass(frozen=True)
class BackupWitness:
    """New parameters found by a bounded backup.

    For a local node ``action_probs[c, a]`` and ``joint_probs[c, a, o, q2]``
    hold ``P(a | c, q)`` and ``P(a, q2 | c, q, o)``; for a device node
    ``action_probs`` is the new successor distribution and ``joint_probs`` is None.
    """

    target: tuple
    action_probs: np.ndarray
    joint_probs: np.ndarray
    epsilon: float
    gain: float = 0.0


def _node_columns(values, axis):
    """Reshape so ``values`` has rows over all other coordinates and one column per node."""
    moved = np.moveaxis(values, axis, -1)
    return moved.reshape(-1, moved.shape[-1])


def _dominance_lp(cols, node, slack, tag):
    """Max eps with cols[:, node] + eps <= cols[:, others] @ x, x in the simplex."""
    others = [k for k in range(cols.shape[1]) if k != node]
    target = cols[:, node]
    rest = cols[:, others]
    tol = get_config()["dominance_tol"]
    # eps* is bounded by the worst row's best single alternative
    upper = float(np.min(rest.max(axis=1) - target))
    if upper < -slack - tol:
        return None
    eps, x = mixture_epsilon(target, rest, threshold=-slack - tol, tag=tag)
    if x is None or eps < -slack - tol:
        return None
    return eps, x / x.sum()


def reduce_local_node(model, jc, vt, agent, node, slack=0.0):
    """Try to merge ``agent``'s ``node`` into a dominating mixture of its peers.

    Returns ``(new_controller, witness)`` when the LP optimum is at least
    ``-slack`` (up to the configured dominance tolerance), else ``None``.
    """
    agent = check_index(agent, jc.n_agents, "agent")
    node = check_index(node, jc.sizes[agent], "node")
    if jc.sizes[agent] < 2:
        raise DecPomdpError("reduction needs at least two nodes in the controller")
    found = _dominance_lp(_node_columns(vt.values, 2 + agent), node, slack, "reduce_local")
    if found is None:
        return None
    eps, dist = found
    new = merge_local_node(jc, agent, node, dist)
    return new, DominanceWitness(("agent", agent, node), dist, eps)


def reduce_device_node(model, jc, vt, node, slack=0.0):
    """Device counterpart of :func:`reduce_local_node`."""
    node = check_index(node, jc.device_size, "device node")
    if jc.device_size < 2:
        raise DecPomdpError("reduction needs at least two device nodes")
    found = _dominance_lp(_node_columns(vt.values, 1), node, slack, "reduce_device")
    if found is None:
        return None
    eps, dist = found
    new = merge_device_node(jc, node, dist)
    return new, DominanceWitness(("device", node), dist, eps)


def _has_incoming(jc, kind, node):
    """Whether any *other* node of the same controller can move into ``node``."""
    if kind == "device":
        t = np.delete(jc.device.transition, node, axis=0)
        return bool(np.any(t[:, node] > 0))
    lc = jc.locals[kind]
    mass = (lc.psi[:, :, :, None] * lc.eta[..., node]).sum(axis=(0, 2, 3))
    mass[node] = 0.0
    return bool(np.any(mass > 0))


def _drop_slice(vt, axis, node):
    return ValueTable(np.delete(vt.values, node, axis=axis), vt.residual)


def reduce_all(model, jc, slack=0.0, vt=None, return_values=False):
    """Reduce until no node of the device or any agent can be merged away.

    Sweeps the device, then each agent in order, over nodes in ascending index,
    re-evaluating after every merge. Returns ``(controller, removals)`` where
    ``removals`` maps ``"device"`` and each agent index to a count.
    """
    vt = evaluate(model, jc) if vt is None else vt
    removals = {"device": 0, **{i: 0 for i in range(jc.n_agents)}}
    while True:
        removed_this_cycle = 0
        for kind in ["device"] + list(range(jc.n_agents)):
            idx = 0
            while True:
                size = jc.device_size if kind == "device" else jc.sizes[kind]
                if idx >= size or size < 2:
                    break
                if kind == "device":
                    found = reduce_device_node(model, jc, vt, idx, slack)
                    axis = 1
                else:
                    found = reduce_local_node(model, jc, vt, kind, idx, slack)
                    axis = 2 + kind
                if found is None:
                    idx += 1
                    continue
                incoming = _has_incoming(jc, kind, idx)
                jc = found[0]
                # a node nobody else moves into does not affect the other values
                vt = evaluate(model, jc) if incoming else _drop_slice(vt, axis, idx)
                removals[kind] += 1
                removed_this_cycle += 1
        if removed_this_cycle == 0:
            break
    if return_values:
        return jc, removals, vt
    return jc, removals


# -- bounded backups --------------------------------------------------------

def local_backup_coefficients(model, jc, values, agent):
    """Coefficients of the local bounded-backup LP for every row.

    Rows are ``(s, c, q_-i)``. Returns ``(reward_coef, future_coef)`` with shapes
    (S, c, *Q_-i, A_i) and (S, c, *Q_-i, A_i, O_i, Q_i): the contribution of
    ``x(c, a_i)`` and of ``x(c, a_i, o_i, q_i')`` respectively.
    """
    n = jc.n_agents
    S = model.n_states
    nc = jc.device_size
    others = [j for j in range(n) if j != agent]
    q_others = tuple(jc.sizes[j] for j in others)
    na, no, nq = model.n_actions[agent], model.n_observations[agent], jc.sizes[agent]
    rcoef = np.zeros((S, nc) + q_others + (na,))
    fcoef = np.zeros((S, nc) + q_others + (na, no, nq))
    vflat = values.reshape(S, -1)
    to = model.trans_obs()
    pairs = _action_obs_pairs(model)
    joint_obs = model.joint_observations()
    dev = jc.device.transition
    beta = model.discount
    for ja, a in enumerate(model.joint_actions()):
        ai = a[agent]
        for c in range(nc):
            weights = [jc.locals[j].psi[c, :, a[j]] for j in others]
            if not all(w.any() for w in weights):
                continue
            wgt = _outer(weights)
            rcoef[(slice(None), c) + (slice(None),) * len(others) + (ai,)] += (
                model.reward[:, ja].reshape((S,) + (1,) * len(others)) * wgt)
        if beta == 0.0:
            continue
        for jo in pairs[ja]:
            o = joint_obs[jo]
            w0 = (to[ja, jo] @ vflat).reshape((S, nc) + jc.sizes)
            for c in range(nc):
                weights = [jc.locals[j].psi[c, :, a[j]] for j in others]
                if not all(w.any() for w in weights):
                    continue
                w = np.tensordot(dev[c], w0, axes=([0], [1]))  # (S, q_0', ..., q_n')
                for j in others:
                    w = _contract_axis(jc.locals[j].eta[c, :, a[j], o[j], :], w, 1 + j)
                w = np.moveaxis(w, 1 + agent, -1)  # (S, q_-i..., q_i')
                w = w * _outer(weights).reshape((1,) + q_others + (1,))
                fcoef[(slice(None), c) + (slice(None),) * len(others) + (ai, o[agent])] += beta * w
    return rcoef, fcoef


def _improve(a_ub, b_ub, a_eq, b_eq, tag):
    """Max-eps solve, then (if enabled) a second solve that keeps every row's
    improvement at the optimum eps and maximizes the summed improvement.

    Without the second stage an eps* = 0 optimum often just returns the
    incumbent even when some rows could strictly improve.
    Returns ``(eps, gain, x)``; gain is the mean one-step improvement per row.
    ``x`` is None when no solver attempt succeeded.
    """
    try:
        eps, x = max_epsilon(a_ub, b_ub, a_eq, b_eq, tag=tag)
    except SolverError:
        # the incumbent is feasible with eps = 0; callers keep it
        return 0.0, 0.0, None
    n = len(b_ub)
    gain = float(np.sum(b_ub - a_ub @ x)) / n
    if not get_config()["bounded_refine"]:
        return eps, gain, x
    floor = max(eps - 1e-9, min(eps, 0.0))
    try:
        gain2, x2 = max_total_gain(a_ub, b_ub, a_eq, b_eq, floor, tag=tag + "_gain")
    except SolverError:
        return eps, gain, x
    if gain2 / n > gain:
        return eps, gain2 / n, x2
    return eps, gain, x


def _normalize_rows(x, fallback, floor=1e-13):
    """Renormalize LP output rows, dropping round-off mass; rows with no mass
    (unreachable because their action has probability ~0) keep ``fallback``."""
    x = np.where(x > floor, x, 0.0)
    sums = x.sum(axis=-1, keepdims=True)
    ok = sums > 0
    return np.where(ok, x / np.where(ok, sums, 1.0), fallback)


def bounded_backup_local(model, jc, vt, agent, node, coefficients=None):
    """Re-optimize the parameters of ``agent``'s ``node`` (value-preserving).

    Solves max eps such that for every ``(s, c, q_-i)`` the one-step lookahead
    with the new parameters beats the current value by eps. The original
    parameters are always feasible, so eps* >= 0 up to solver round-off.
    Returns ``(new_controller, witness)``.
    """
    agent = check_index(agent, jc.n_agents, "agent")
    node = check_index(node, jc.sizes[agent], "node")
    if coefficients is None:
        coefficients = local_backup_coefficients(model, jc, vt.values, agent)
    rcoef, fcoef = coefficients
    nc = jc.device_size
    na, no, nq = model.n_actions[agent], model.n_observations[agent], jc.sizes[agent]
    S = model.n_states
    lhs = np.take(vt.values, node, axis=2 + agent)  # (S, c, q_-i...)
    n_rows_c = int(np.prod(lhs.shape[2:])) * S
    n_x = na + na * no * nq  # variables per device node
    blocks_ub, b_ub = [], []
    for c in range(nc):
        rc = rcoef[:, c].reshape(n_rows_c, na)
        fc = fcoef[:, c].reshape(n_rows_c, na * no * nq)
        block = np.hstack([rc, fc])
        row = sp.lil_matrix((n_rows_c, nc * n_x))
        row[:, c * n_x:(c + 1) * n_x] = -block
        blocks_ub.append(row.tocsr())
        b_ub.append(-lhs[:, c].reshape(n_rows_c))
    a_ub = sp.vstack(blocks_ub, format="csr")
    b_ub = np.concatenate(b_ub)
    eq_rows = []
    for c in range(nc):
        r = np.zeros(nc * n_x)
        r[c * n_x:c * n_x + na] = 1.0
        eq_rows.append(r)
        for a in range(na):
            for o in range(no):
                r = np.zeros(nc * n_x)
                r[c * n_x + a] = -1.0
                start = c * n_x + na + (a * no + o) * nq
                r[start:start + nq] = 1.0
                eq_rows.append(r)
    a_eq = sp.csr_matrix(np.array(eq_rows))
    b_eq = np.array([1.0 if k % (1 + na * no) == 0 else 0.0 for k in range(len(eq_rows))])
    eps, gain, x = _improve(a_ub, b_ub, a_eq, b_eq, "bounded_local")
    if x is None:
        return jc, BackupWitness(("agent", agent, node), None, None, 0.0)
    x = x.reshape(nc, n_x)
    act = x[:, :na]
    joint = x[:, na:].reshape(nc, na, no, nq)
    lc = jc.locals[agent]
    psi = np.array(lc.psi)
    eta = np.array(lc.eta)
    psi[:, node] = _normalize_rows(act, psi[:, node])
    for c in range(nc):
        for a in range(na):
            eta[c, node, a] = _normalize_rows(joint[c, a], eta[c, node, a])
    new = jc.replace_local(agent, LocalController(psi, eta, validate=False))
    return new, BackupWitness(("agent", agent, node), act, joint, eps, gain)


def bounded_backup_device(model, jc, vt, node):
    """Re-optimize the successor distribution of device node ``node``."""
    node = check_index(node, jc.device_size, "device node")
    nc = jc.device_size
    psis = [lc.psi[node:node + 1] for lc in jc.locals]
    etas = [lc.eta[node:node + 1] for lc in jc.locals]
    S = model.n_states
    const = bellman(model, np.ones((1, 1)), psis, etas, np.zeros((S, 1) + jc.sizes), reward=True)
    const = const[:, 0].reshape(-1)
    cols = []
    for c2 in range(nc):
        unit = np.zeros((1, nc))
        unit[0, c2] = 1.0
        fut = bellman(model, unit, psis, etas, vt.values, reward=False)
        cols.append(fut[:, 0].reshape(-1))
    f = np.stack(cols, axis=1)
    lhs = vt.values[:, node].reshape(-1)
    eps, gain, x = _improve(-f, const - lhs, np.ones((1, nc)), np.array([1.0]),
                            "bounded_device")
    if x is None:
        return jc, BackupWitness(("device", node), None, None, 0.0)
    t = np.array(jc.device.transition)
    x = _normalize_rows(x, t[node])
    t[node] = x
    new = JointController(jc.locals, CorrelationDevice(t, validate=False))
    return new, BackupWitness(("device", node), x, None, eps, gain)


def bounded_update_cycle(model, jc, vt=None, tol=1e-7, max_cycles=100):
    """Bounded-backup every node (device, then agents, ascending) until a full
    cycle's summed eps* falls below ``tol``. Returns ``(controller, steps)``."""
    vt = evaluate(model, jc) if vt is None else vt
    steps = 0
    for _ in range(max_cycles):
        total = 0.0
        for c in range(jc.device_size):
            jc, wit = bounded_backup_device(model, jc, vt, c)
            vt = evaluate(model, jc)
            total += max(wit.epsilon, 0.0) + max(wit.gain, 0.0)
            steps += 1
        for i in range(jc.n_agents):
            for q in range(jc.sizes[i]):
                jc, wit = bounded_backup_local(model, jc, vt, i, q)
                vt = evaluate(model, jc)
                total += max(wit.epsilon, 0.0) + max(wit.gain, 0.0)
                steps += 1
        if total < tol:
            break
    return jc, steps


def bounded_pi_run(model, sizes, device_size=1, steps=200, seed=None):
    """One trial run of repeated bounded backups on a fixed-size controller.

    Starts from a random deterministic controller, then performs ``steps``
    backups, each on a node drawn uniformly from all device and local nodes.
    Returns ``(controller, trace)`` with ``trace[k]`` the value at the initial
    belief after ``k`` steps.
    """
    rng = np.random.default_rng(seed)
    jc = random_deterministic(model, sizes, device_size, rng)
    vt = evaluate(model, jc)
    trace = [value_at_belief(vt, model.initial_belief)[0]]
    total_nodes = device_size + sum(sizes)
    for _ in range(steps):
        k = int(rng.integers(total_nodes))
        if k < device_size:
            jc, _ = bounded_backup_device(model, jc, vt, k)
        else:
            k -= device_size
            for i, n in enumerate(sizes):
                if k < n:
                    jc, _ = bounded_backup_local(model, jc, vt, i, k)
                    break
                k -= n
        vt = evaluate(model, jc)
        trace.append(value_at_belief(vt, model.initial_belief)[0])
    return jc, np.array(trace)
