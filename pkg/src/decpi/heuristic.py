"""Heuristic policy iteration: belief points sampled under fixed policies of
the other agents steer which backed-up nodes are kept and which are pruned."""

import time
from collections import deque
from dataclasses import dataclass

import numpy as np

from ._validation import check_belief, check_index
from .controller import (
    JointController,
    drop_local_nodes,
    evaluate,
    make_initial,
    merge_local_node,
    value_at_belief,
)
from .exceptions import CapacityError, DecPomdpError, ParseError
from .model import FixedAgentPolicy, belief_update, observation_likelihood
from .solver import (
    DEFAULT_MAX_NODES,
    DEFAULT_MAX_SECONDS,
    IterationLog,
    IterationRecord,
    _check_clock,
    exhaustive_backup,
    exhaustive_backup_size,
)
from .transform import DominanceWitness, _dominance_lp, _drop_slice, _has_incoming

POINT_TOL = 1e-9


@dataclass(frozen=True)
class BeliefPoint:
    """A belief and the ``(action, observation)`` path that reaches it from b0."""

    probs: np.ndarray
    path: tuple = ()


class BeliefPointSet:
    """Per-agent belief points with a common target count ``k``."""

    def __init__(self, points, k):
        self.points = {int(i): list(p) for i, p in points.items()}
        self.k = int(k)
        for i, pts in self.points.items():
            if len(pts) > self.k:
                raise DecPomdpError(f"agent {i} has {len(pts)} points, more than k={self.k}")

    def beliefs(self, agent):
        return np.array([p.probs for p in self.points[agent]])

    def __len__(self):
        return sum(len(p) for p in self.points.values())

    def to_text(self):
        """One line per point: ``agent | a,o a,o ... | p_0 p_1 ...``."""
        lines = [f"k: {self.k}"]
        for i in sorted(self.points):
            for p in self.points[i]:
                path = " ".join(f"{a},{o}" for a, o in p.path)
                probs = " ".join(format(float(x), ".17g") for x in p.probs)
                lines.append(f"{i} | {path} | {probs}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text):
        lines = [ln for ln in text.splitlines() if ln.strip() and not ln.startswith("#")]
        if not lines or not lines[0].startswith("k:"):
            raise ParseError("missing 'k:' header", line=1)
        try:
            k = int(lines[0][2:])
        except ValueError:
            raise ParseError("bad k value", line=1) from None
        points = {}
        for n, ln in enumerate(lines[1:], start=2):
            parts = ln.split("|")
            if len(parts) != 3:
                raise ParseError("expected 'agent | path | probabilities'", line=n)
            try:
                agent = int(parts[0])
                path = tuple(tuple(int(v) for v in step.split(","))
                             for step in parts[1].split())
                probs = np.array([float(v) for v in parts[2].split()])
            except ValueError as exc:
                raise ParseError(str(exc), line=n) from None
            points.setdefault(agent, []).append(BeliefPoint(probs, path))
        return cls(points, k)


def _is_new(b, found):
    return all(np.max(np.abs(b - f.probs)) > POINT_TOL for f in found)


def generate_belief_points(model, b0, k, agent, others, seed=None, max_restarts=10):
    """Breadth-first expansion of beliefs reachable from ``b0`` for ``agent``.

    Children of a point are its updates over every (action, observation)
    pair with positive likelihood under ``others``. Points within
    ``POINT_TOL`` (max norm) of a known one are skipped. When the search
    closes before ``k`` points, it is repeated with a seeded random pair
    order until a pass adds nothing or ``max_restarts`` passes were made.
    """
    if k < 1:
        raise DecPomdpError("k must be at least 1")
    agent = check_index(agent, model.n_agents, "agent")
    if others.agent != agent:
        raise DecPomdpError("fixed policy belongs to a different agent")
    b0 = check_belief(b0, model.n_states)
    rng = np.random.default_rng(seed)
    pairs = [(a, o) for a in range(model.n_actions[agent])
             for o in range(model.n_observations[agent])]
    found = [BeliefPoint(b0, ())]

    def expand(order):
        added = 0
        queue = deque(found)
        while queue and len(found) < k:
            point = queue.popleft()
            likes = {}
            for a, o in order:
                if a not in likes:
                    likes[a] = observation_likelihood(model, point.probs, agent, a, others)
                if likes[a][o] <= 1e-12:
                    continue
                b = belief_update(model, point.probs, agent, a, o, others)
                if _is_new(b, found):
                    child = BeliefPoint(b, point.path + ((a, o),))
                    found.append(child)
                    queue.append(child)
                    added += 1
                    if len(found) >= k:
                        break
        return added

    expand(pairs)
    for _ in range(max_restarts):
        if len(found) >= k:
            break
        order = [pairs[j] for j in rng.permutation(len(pairs))]
        if expand(order) == 0:
            break
    return found


def replay_point(model, b0, agent, others, path):
    """Recompute a belief from its stored path (raises if any step is unreachable)."""
    b = check_belief(b0, model.n_states)
    for a, o in path:
        b = belief_update(model, b, agent, a, o, others)
    return b


def default_fixed_policies(model):
    """Per-agent fixed policies for point generation.

    Two-agent tiger uses listen 0.8 and each door 0.1; every other model
    uses uniform action choice.
    """
    if model.name == "dec-tiger":
        per_agent = [np.array([0.1, 0.1, 0.8])] * model.n_agents
        return [FixedAgentPolicy.from_agent_policies(model, i, per_agent)
                for i in range(model.n_agents)]
    return [FixedAgentPolicy.uniform(model, i) for i in range(model.n_agents)]


def make_point_set(model, k, others=None, b0=None, seed=None):
    others = default_fixed_policies(model) if others is None else others
    b0 = model.initial_belief if b0 is None else b0
    rng = np.random.default_rng(seed)
    points = {}
    for i in range(model.n_agents):
        sub_seed = int(rng.integers(2**31))
        points[i] = generate_belief_points(model, b0, k, i, others[i], seed=sub_seed)
    return BeliefPointSet(points, k)


def _joint_values(vt, beliefs):
    """Values of every joint node at every belief: shape (P, c, q_0, ..., q_n)."""
    return np.tensordot(beliefs, vt.values, axes=([1], [0]))


def _successor_closure(jc, marked):
    """Per-agent node sets reachable from ``marked`` (inclusive)."""
    closure = []
    for lc, seeds in zip(jc.locals, marked):
        # reach[q, q2] > 0 when q can move to q2 in one step
        reach = (lc.psi[..., None, None] * lc.eta).sum(axis=(0, 2, 3)) > 0
        seen = set(seeds)
        frontier = list(seeds)
        while frontier:
            q = frontier.pop()
            for q2 in np.flatnonzero(reach[q]):
                if int(q2) not in seen:
                    seen.add(int(q2))
                    frontier.append(int(q2))
        closure.append(sorted(seen))
    return closure


def retain_best_nodes(model, jc, vt, points, successors="keep"):
    """Keep, for each agent, its component of the best joint node at each of
    its own belief points; delete every other node of all agents at once.

    ``successors="keep"`` also keeps every node reachable from a kept node,
    so kept joint nodes retain their exact values. With ``"redirect"`` only
    the marked nodes survive and a deleted node's incoming transitions move
    to the kept node chosen at the point where the deleted node was closest
    to best (smallest gap between its best joint value and the point's
    optimum; ties to the lower point index).
    """
    if successors not in ("keep", "redirect"):
        raise DecPomdpError(f"successors must be 'keep' or 'redirect', got {successors!r}")
    n = jc.n_agents
    marked, best_at, regrets = [], [], []
    for i in range(n):
        beliefs = points.beliefs(i)
        vals = _joint_values(vt, beliefs)
        best = []
        for p in range(len(beliefs)):
            flat = int(np.argmax(vals[p]))
            best.append(int(np.unravel_index(flat, vals[p].shape)[1 + i]))
        marked.append(sorted(set(best)))
        best_at.append(best)
        if successors == "redirect":
            # per node, its best joint value at each point: (P, Q_i)
            per_node = np.moveaxis(vals, 2 + i, -1).reshape(
                len(beliefs), -1, jc.sizes[i]).max(axis=1)
            regrets.append(per_node.max(axis=1, keepdims=True) - per_node)
    if successors == "keep":
        for i, keep in enumerate(_successor_closure(jc, marked)):
            if len(keep) < jc.sizes[i]:
                jc = drop_local_nodes(jc, i, keep)
        return jc
    plans = []
    for i in range(n):
        redirect = {q: best_at[i][int(np.argmin(regrets[i][:, q]))]
                    for q in range(jc.sizes[i]) if q not in marked[i]}
        plans.append(redirect)
    for i, redirect in enumerate(plans):
        if redirect:
            jc = drop_local_nodes(jc, i, marked[i], redirect)
    return jc


def point_prune_node(model, jc, vt, agent, node, points):
    """Merge ``node`` into a mixture of its peers if the mixture is at least as
    good at every one of ``agent``'s points against every node of the others.

    Returns ``(new_controller, witness)`` or ``None``.
    """
    agent = check_index(agent, jc.n_agents, "agent")
    node = check_index(node, jc.sizes[agent], "node")
    if jc.sizes[agent] < 2:
        raise DecPomdpError("pruning needs at least two nodes in the controller")
    vals = _joint_values(vt, points.beliefs(agent))
    cols = np.moveaxis(vals, 2 + agent, -1).reshape(-1, jc.sizes[agent])
    found = _dominance_lp(cols, node, 0.0, "point_prune")
    if found is None:
        return None
    eps, dist = found
    return merge_local_node(jc, agent, node, dist), DominanceWitness(
        ("agent", agent, node), dist, eps)


def point_prune_all(model, jc, points, vt=None):
    """Sweep agents ascending, nodes ascending, until nothing more is pruned."""
    vt = evaluate(model, jc) if vt is None else vt
    removed = 0
    while True:
        before = removed
        for i in range(jc.n_agents):
            idx = 0
            while idx < jc.sizes[i] and jc.sizes[i] >= 2:
                found = point_prune_node(model, jc, vt, i, idx, points)
                if found is None:
                    idx += 1
                    continue
                incoming = _has_incoming(jc, i, idx)
                jc = found[0]
                vt = evaluate(model, jc) if incoming else _drop_slice(vt, 2 + i, idx)
                removed += 1
        if removed == before:
            return jc, removed, vt


def _same_controller(a, b, atol=1e-9):
    return a.sizes == b.sizes and a.device_size == b.device_size and a.allclose(b, atol=atol)


def heuristic_policy_iteration(model, k=10, others=None, seed=None, jc0=None, b0=None,
                               max_nodes=DEFAULT_MAX_NODES, max_seconds=DEFAULT_MAX_SECONDS,
                               max_iter=None, points=None, successors="keep",
                               callback=None):
    """Backup, keep nodes that are best at some point, prune, repeat.

    Point sets are drawn once up front (``points`` may be supplied instead).
    Stops when sizes and parameters no longer change (``"converged"``) or
    after ``max_iter`` iterations. Capacity problems raise ``CapacityError``
    with ``partial = (controller, log)``.
    """
    if jc0 is None:
        jc0 = make_initial(model, [0] * model.n_agents)
    jc0.check_model(model)
    if jc0.device_size != 1:
        raise DecPomdpError("heuristic policy iteration works on independent controllers")
    if points is None:
        points = make_point_set(model, k, others, b0, seed)
    b_start = model.initial_belief if b0 is None else check_belief(b0, model.n_states)
    start = time.perf_counter()
    log = IterationLog()
    jc = jc0
    vt = evaluate(model, jc)
    exhaustive = jc.sizes
    log.append(IterationRecord(0, jc.sizes, 1, jc.sizes, exhaustive,
                               value_at_belief(vt, b_start)[0], time.perf_counter() - start))
    if callback:
        callback(0, jc, log)
    t = 0
    while True:
        if max_iter is not None and t >= max_iter:
            log.termination = "max-iterations"
            return jc, log
        try:
            backed = exhaustive_backup(model, jc, max_nodes=max_nodes)
            _check_clock(start, max_seconds)
            vt_b = evaluate(model, backed)
            kept = retain_best_nodes(model, backed, vt_b, points, successors)
            retained = sum(backed.sizes) - sum(kept.sizes)
            _check_clock(start, max_seconds)
            new, pruned, vt = point_prune_all(model, kept, points)
        except CapacityError as exc:
            log.termination = exc.reason
            exc.partial = (jc, log)
            raise
        t += 1
        exhaustive = tuple(exhaustive_backup_size(model.n_actions[i], exhaustive[i],
                                                  model.n_observations[i])
                           for i in range(model.n_agents))
        log.append(IterationRecord(t, new.sizes, 1, backed.sizes, exhaustive,
                                   value_at_belief(vt, b_start)[0],
                                   time.perf_counter() - start, retained + pruned, 0))
        converged = _same_controller(new, jc)
        jc = new
        if callback:
            callback(t, jc, log)
        if converged:
            log.termination = "converged"
            return jc, log
