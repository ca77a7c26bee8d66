"""Stochastic finite-state controllers, the correlation device, and exact
evaluation of the correlated joint controller."""

from dataclasses import dataclass

import numpy as np
import scipy.linalg
from scipy.sparse.linalg import LinearOperator, gmres

from ._config import get_config
from ._validation import check_belief, check_distribution, check_index
from .exceptions import CapacityError, DecPomdpError, SolverError


def _frozen(a):
    a = np.array(a, dtype=float, order="C")
    a.setflags(write=False)
    return a


class LocalController:
    """One agent's controller, conditioned on the correlation device node.

    Attributes
    ----------
    psi : ndarray of shape (n_device, n_nodes, n_actions)
        ``psi[c, q, a] = P(a | c, q)``.
    eta : ndarray of shape (n_device, n_nodes, n_actions, n_observations, n_nodes)
        ``eta[c, q, a, o, q2] = P(q2 | c, q, a, o)``.
    """

    def __init__(self, psi, eta, validate=True):
        psi = np.asarray(psi, dtype=float)
        eta = np.asarray(eta, dtype=float)
        if psi.ndim != 3 or eta.ndim != 5:
            raise DecPomdpError("psi must be 3-d and eta 5-d")
        c, q, a = psi.shape
        if eta.shape[:3] != (c, q, a) or eta.shape[4] != q:
            raise DecPomdpError(f"eta shape {eta.shape} inconsistent with psi shape {psi.shape}")
        if q < 1 or c < 1:
            raise DecPomdpError("controllers need at least one node")
        if validate:
            check_distribution(psi, name="action selection")
            check_distribution(eta, name="node transition")
        self.psi = _frozen(psi)
        self.eta = _frozen(eta)

    @property
    def n_nodes(self):
        return self.psi.shape[1]

    @property
    def n_device(self):
        return self.psi.shape[0]

    @property
    def n_actions(self):
        return self.psi.shape[2]

    @property
    def n_observations(self):
        return self.eta.shape[3]

    def joint_params(self):
        """``P(a, q2 | c, q, o)`` with shape (c, q, a, o, q2)."""
        return self.psi[:, :, :, None, None] * self.eta

    def __eq__(self, other):
        return (isinstance(other, LocalController) and self.psi.shape == other.psi.shape
                and self.eta.shape == other.eta.shape
                and np.array_equal(self.psi, other.psi) and np.array_equal(self.eta, other.eta))

    def allclose(self, other, atol=1e-9):
        return (self.psi.shape == other.psi.shape and self.eta.shape == other.eta.shape
                and np.allclose(self.psi, other.psi, rtol=0, atol=atol)
                and np.allclose(self.eta, other.eta, rtol=0, atol=atol))


class CorrelationDevice:
    """Shared random signal: ``transition[c, c2] = P(c2 | c)``."""

    def __init__(self, transition, validate=True):
        t = np.atleast_2d(np.asarray(transition, dtype=float))
        if t.shape[0] != t.shape[1] or t.shape[0] < 1:
            raise DecPomdpError(f"device transition must be square, got {t.shape}")
        if validate:
            check_distribution(t, name="device transition")
        self.transition = _frozen(t)

    @classmethod
    def trivial(cls):
        return cls(np.ones((1, 1)))

    @property
    def n_nodes(self):
        return self.transition.shape[0]

    def __eq__(self, other):
        return (isinstance(other, CorrelationDevice)
                and self.transition.shape == other.transition.shape
                and np.array_equal(self.transition, other.transition))


class JointController:
    """Local controllers for every agent plus a correlation device.

    Joint nodes are tuples ``(c, q_0, ..., q_{n-1})``, device first.
    """

    def __init__(self, locals_, device=None):
        self.locals = tuple(locals_)
        self.device = CorrelationDevice.trivial() if device is None else device
        for i, lc in enumerate(self.locals):
            if lc.n_device != self.device.n_nodes:
                raise DecPomdpError(
                    f"agent {i} controller expects {lc.n_device} device nodes, "
                    f"device has {self.device.n_nodes}")

    @property
    def n_agents(self):
        return len(self.locals)

    @property
    def sizes(self):
        return tuple(lc.n_nodes for lc in self.locals)

    @property
    def device_size(self):
        return self.device.n_nodes

    @property
    def n_joint_nodes(self):
        return self.device_size * int(np.prod(self.sizes))

    def check_model(self, model):
        if self.n_agents != model.n_agents:
            raise DecPomdpError(
                f"controller has {self.n_agents} agents, model has {model.n_agents}")
        for i, lc in enumerate(self.locals):
            if lc.n_actions != model.n_actions[i] or lc.n_observations != model.n_observations[i]:
                raise DecPomdpError(f"agent {i} controller does not match the model's sets")
        return self

    def replace_local(self, agent, local):
        locals_ = list(self.locals)
        locals_[agent] = local
        return JointController(locals_, self.device)

    def __eq__(self, other):
        return (isinstance(other, JointController) and self.device == other.device
                and self.locals == other.locals)

    def allclose(self, other, atol=1e-9):
        return (isinstance(other, JointController) and self.sizes == other.sizes
                and self.device.transition.shape == other.device.transition.shape
                and np.allclose(self.device.transition, other.device.transition, rtol=0, atol=atol)
                and all(a.allclose(b, atol) for a, b in zip(self.locals, other.locals)))

    def __repr__(self):
        return f"JointController(sizes={self.sizes}, device={self.device_size})"


@dataclass(frozen=True)
class ValueTable:
    """``values[s, c, q_0, ..., q_{n-1}]`` plus the achieved fixed-point residual."""

    values: np.ndarray
    residual: float

    @property
    def n_states(self):
        return self.values.shape[0]

    def at_belief(self, belief):
        """Value of every joint node for a state distribution, shape (c, q_0, ...)."""
        b = check_belief(belief, self.n_states)
        return np.tensordot(b, self.values, axes=(0, 0))


def value_at_belief(vt, belief):
    """Best joint starting node for ``belief`` and its value.

    Ties go to the lexicographically smallest ``(c, q_0, ..., q_{n-1})``.
    """
    vals = vt.at_belief(belief)
    flat = int(np.argmax(vals))
    node = tuple(int(k) for k in np.unravel_index(flat, vals.shape))
    return float(vals.reshape(-1)[flat]), node


# -- construction ---------------------------------------------------------

def make_initial(model, first_actions):
    """Single-node, self-looping deterministic controllers and a trivial device."""
    if len(first_actions) != model.n_agents:
        raise DecPomdpError(f"need one action per agent, got {len(first_actions)}")
    locals_ = []
    for i, a in enumerate(first_actions):
        a = check_index(a, model.n_actions[i], f"action for agent {i}")
        psi = np.zeros((1, 1, model.n_actions[i]))
        psi[0, 0, a] = 1.0
        eta = np.ones((1, 1, model.n_actions[i], model.n_observations[i], 1))
        locals_.append(LocalController(psi, eta))
    return JointController(locals_, CorrelationDevice.trivial())


def random_deterministic(model, sizes, device_size=1, rng=None):
    """Deterministic controllers with uniformly drawn actions and successors."""
    rng = np.random.default_rng(rng)
    if len(sizes) != model.n_agents:
        raise DecPomdpError("need one size per agent")
    if min(sizes) < 1 or device_size < 1:
        raise DecPomdpError("controller sizes must be at least 1")
    dev = np.zeros((device_size, device_size))
    dev[np.arange(device_size), rng.integers(device_size, size=device_size)] = 1.0
    locals_ = []
    for i, n in enumerate(sizes):
        na, no = model.n_actions[i], model.n_observations[i]
        psi = np.zeros((device_size, n, na))
        acts = rng.integers(na, size=(device_size, n))
        np.put_along_axis(psi, acts[..., None], 1.0, axis=2)
        eta = np.zeros((device_size, n, na, no, n))
        nxt = rng.integers(n, size=(device_size, n, na, no))
        np.put_along_axis(eta, nxt[..., None], 1.0, axis=4)
        locals_.append(LocalController(psi, eta))
    return JointController(locals_, CorrelationDevice(dev))


def random_stochastic(model, sizes, device_size=1, rng=None, concentration=1.0):
    """Dirichlet-random controller; handy for property tests."""
    rng = np.random.default_rng(rng)
    dev = rng.dirichlet(np.full(device_size, concentration), size=device_size)
    locals_ = []
    for i, n in enumerate(sizes):
        na, no = model.n_actions[i], model.n_observations[i]
        psi = rng.dirichlet(np.full(na, concentration), size=(device_size, n))
        eta = rng.dirichlet(np.full(n, concentration), size=(device_size, n, na, no))
        locals_.append(LocalController(psi, eta))
    return JointController(locals_, CorrelationDevice(dev))


# -- evaluation -----------------------------------------------------------

def _contract_axis(mat, w, axis):
    """Apply ``mat`` (src x tgt) to axis ``axis`` of ``w``, replacing tgt by src."""
    return np.moveaxis(np.tensordot(mat, w, axes=([1], [axis])), 0, axis)


def _outer(vectors):
    out = np.ones(())
    for v in vectors:
        out = np.multiply.outer(out, v)
    return out


def bellman(model, device, psis, etas, values, reward=True):
    """One application of the joint controller's Bellman operator.

    ``psis[i]`` has shape (c, src_i, a_i) and ``etas[i]`` has shape
    (c, src_i, a_i, o_i, tgt_i); ``values`` has shape (s, c, tgt_0, ...) with an
    optional trailing batch axis. Returns an array of shape (s, c, src_0, ...).
    With ``reward=False`` only the discounted future term is produced.
    """
    n = len(psis)
    S = model.n_states
    nc, nc_next = device.shape
    src = tuple(p.shape[1] for p in psis)
    tgt = values.shape[2:2 + n]
    batch = values.shape[2 + n:]
    if reward and batch:
        raise ValueError("reward term undefined for batched values")
    out = np.zeros((S, nc) + src + batch)
    vflat = values.reshape(S, -1)
    to = model.trans_obs()
    beta = model.discount
    pairs = _action_obs_pairs(model)
    joint_obs = model.joint_observations()
    for ja, a in enumerate(model.joint_actions()):
        active = [c for c in range(nc) if all(psis[i][c, :, a[i]].any() for i in range(n))]
        if not active:
            continue
        acc = {c: 0.0 for c in active}
        if beta > 0.0:
            for jo in pairs[ja]:
                o = joint_obs[jo]
                w0 = (to[ja, jo] @ vflat).reshape((S, nc_next) + tgt + batch)
                for c in active:
                    w = np.tensordot(device[c], w0, axes=([0], [1]))
                    for i in range(n):
                        w = _contract_axis(etas[i][c, :, a[i], o[i], :], w, 1 + i)
                    acc[c] = acc[c] + w
        shape_r = (S,) + (1,) * (n + len(batch))
        for c in active:
            val = beta * acc[c] if beta > 0.0 else 0.0
            if reward:
                val = val + model.reward[:, ja].reshape(shape_r)
            weight = _outer([psis[i][c, :, a[i]] for i in range(n)])
            weight = weight.reshape((1,) + src + (1,) * len(batch))
            out[:, c] += weight * val
    return out


def _action_obs_pairs(model):
    cached = getattr(model, "_ao_pairs", None)
    if cached is None:
        cached = [[] for _ in range(model.n_joint_actions)]
        for ja, jo in model.nonzero_action_observations():
            cached[ja].append(jo)
        model._ao_pairs = cached
    return cached


def recurrent_nodes(jc):
    """Per-agent sorted node indices that some transition can reach.

    These sets are closed under transitions, so the evaluation system only has
    to be solved on their product; every other joint node is a one-step backup.
    """
    core = []
    for lc in jc.locals:
        mass = (lc.psi[:, :, :, None, None] * lc.eta).sum(axis=(0, 1, 2, 3))
        core.append(np.flatnonzero(mass > 0))
    return core


def _check_table_size(model, jc):
    entries = model.n_states * jc.n_joint_nodes
    limit = get_config()["max_table_entries"]
    if entries > limit:
        raise CapacityError(
            f"value table would need {entries} entries (limit {limit})")


def evaluate(model, jc):
    """Solve for ``V(s, c, q_0, ...)`` of a correlated joint controller.

    The linear system is solved on the product of the recurrent node sets
    (dense factorization when small, GMRES otherwise); remaining joint nodes
    follow from one Bellman backup of that solution.
    """
    jc.check_model(model)
    _check_table_size(model, jc)
    cfg = get_config()
    core = recurrent_nodes(jc)
    dev = jc.device.transition
    core_psi = [lc.psi[:, idx, :] for lc, idx in zip(jc.locals, core)]
    core_eta = [lc.eta[:, idx][..., idx] for lc, idx in zip(jc.locals, core)]
    shape = (model.n_states, jc.device_size) + tuple(len(idx) for idx in core)
    n_unknowns = int(np.prod(shape))

    r = bellman(model, dev, core_psi, core_eta, np.zeros(shape), reward=True).ravel()
    if n_unknowns <= cfg["dense_limit"]:
        eye = np.eye(n_unknowns).reshape(shape + (n_unknowns,))
        p = bellman(model, dev, core_psi, core_eta, eye, reward=False).reshape(
            n_unknowns, n_unknowns)
        try:
            v_core = scipy.linalg.solve(np.eye(n_unknowns) - p, r)
        except (np.linalg.LinAlgError, scipy.linalg.LinAlgError) as exc:
            raise SolverError(f"controller evaluation system is singular: {exc}") from exc
    else:
        v_core = _solve_iterative(model, dev, core_psi, core_eta, r, shape, cfg["eval_tol"])
    v_core = v_core.reshape(shape)

    full_eta = [lc.eta[..., idx] for lc, idx in zip(jc.locals, core)]
    full = bellman(model, dev, [lc.psi for lc in jc.locals], full_eta, v_core, reward=True)
    sel = full[np.ix_(range(shape[0]), range(shape[1]), *core)]
    residual = float(np.max(np.abs(sel - v_core))) if sel.size else 0.0
    if not np.isfinite(residual):
        raise SolverError("controller evaluation produced non-finite values")
    full.setflags(write=False)
    return ValueTable(full, residual)


def _solve_iterative(model, dev, psis, etas, r, shape, tol):
    n = r.size

    def matvec(v):
        v = np.asarray(v).reshape(shape)
        return (v - bellman(model, dev, psis, etas, v, reward=False)).ravel()

    op = LinearOperator((n, n), matvec=matvec, dtype=float)
    v, info = gmres(op, r, rtol=1e-13, atol=1e-3 * tol, restart=60, maxiter=200)
    if info < 0:
        raise SolverError(f"GMRES failed with code {info}")
    v = v.reshape(shape)
    # polish with contraction sweeps until the fixed-point residual is small
    for _ in range(2000):
        nxt = bellman(model, dev, psis, etas, v, reward=True)
        res = float(np.max(np.abs(nxt - v)))
        v = nxt
        if res <= 0.1 * tol:
            break
    return v.ravel()


def evaluate_independent(model, jc):
    """Evaluation that ignores the device; only valid when it has one node.

    Builds the dense system over (s, q_0, ..., q_{n-1}) by explicit enumeration
    of joint actions and observations. Used to cross-check :func:`evaluate`.
    """
    if jc.device_size != 1:
        raise DecPomdpError("independent evaluation needs a single-node device")
    params = [lc.joint_params()[0] for lc in jc.locals]  # (q, a, o, q2)
    sizes = jc.sizes
    nq = int(np.prod(sizes))
    S = model.n_states
    a_mat = np.eye(S * nq)
    rhs = np.zeros(S * nq)
    nodes = list(np.ndindex(*sizes))
    for s in range(S):
        for qi, q in enumerate(nodes):
            row = s * nq + qi
            for ja, a in enumerate(model.joint_actions()):
                pa = np.prod([jc.locals[i].psi[0, q[i], a[i]] for i in range(len(q))])
                if pa == 0:
                    continue
                rhs[row] += pa * model.reward[s, ja]
                for jo, o in enumerate(model.joint_observations()):
                    for s2 in range(S):
                        pso = model.transition[s, ja, s2] * model.observation[ja, s2, jo]
                        if pso == 0:
                            continue
                        nxt = _outer([params[i][q[i], a[i], o[i]] for i in range(len(q))])
                        a_mat[row, s2 * nq:(s2 + 1) * nq] -= model.discount * pso * nxt.ravel()
    v = np.linalg.solve(a_mat, rhs)
    return v.reshape((S, 1) + sizes)


# -- structural edits used by the transformations ----------------------------

def merge_local_node(jc, agent, node, distribution):
    """Remove ``node`` from ``agent``'s controller, rerouting incoming mass.

    ``distribution`` is over the remaining nodes, in their post-removal order.
    """
    lc = jc.locals[agent]
    keep = np.array([k for k in range(lc.n_nodes) if k != node])
    dist = np.clip(np.asarray(distribution, dtype=float), 0.0, None)
    dist = dist / dist.sum()
    eta = lc.eta[..., keep] + lc.eta[..., node][..., None] * dist
    eta = eta[:, keep]
    eta = eta / eta.sum(axis=-1, keepdims=True)
    psi = lc.psi[:, keep]
    return jc.replace_local(agent, LocalController(psi, eta, validate=False))


def merge_device_node(jc, node, distribution):
    """Remove a device node, rerouting its incoming probability."""
    t = jc.device.transition
    keep = np.array([k for k in range(t.shape[0]) if k != node])
    dist = np.clip(np.asarray(distribution, dtype=float), 0.0, None)
    dist = dist / dist.sum()
    nt = t[:, keep] + t[:, node][:, None] * dist
    nt = nt[keep]
    nt = nt / nt.sum(axis=1, keepdims=True)
    locals_ = [LocalController(lc.psi[keep], lc.eta[keep], validate=False) for lc in jc.locals]
    return JointController(locals_, CorrelationDevice(nt, validate=False))


def drop_local_nodes(jc, agent, keep, redirect=None):
    """Keep only nodes ``keep`` of ``agent``.

    ``redirect`` maps each dropped node (old index) to the retained node (old
    index) that inherits its incoming transitions. Without it, a dropped node
    must not be the target of any retained node.
    """
    lc = jc.locals[agent]
    keep = np.asarray(sorted(int(k) for k in keep))
    eta = np.array(lc.eta[:, keep])
    for old, new in (redirect or {}).items():
        eta[..., new] += eta[..., old]
    eta = eta[..., keep]
    sums = eta.sum(axis=-1, keepdims=True)
    if np.any(sums <= 0):
        raise DecPomdpError("dropping nodes left transitions with no successor")
    eta = eta / sums
    return jc.replace_local(agent, LocalController(lc.psi[:, keep], eta, validate=False))
