"""Estimator-style wrappers: configure with constructor parameters, then
``fit(model)`` and read the fitted attributes (trailing underscore)."""

import warnings

import numpy as np
from sklearn.base import BaseEstimator

from .controller import evaluate, make_initial, value_at_belief
from .exceptions import CapacityError, DecPomdpError
from .heuristic import heuristic_policy_iteration
from .model import DecPomdp
from .solver import DEFAULT_MAX_NODES, DEFAULT_MAX_SECONDS, policy_iteration
from .transform import bounded_pi_run


class CapacityWarning(UserWarning):
    """A run stopped early on a node, memory or time budget."""


def _check_model(model):
    if not isinstance(model, DecPomdp):
        raise DecPomdpError(f"fit expects a DecPomdp, got {type(model).__name__}")
    return model


class _ControllerSolver(BaseEstimator):
    def _finish(self, model, jc, log, termination):
        self.controller_ = jc
        self.log_ = log
        self.termination_ = termination
        vt = evaluate(model, jc)
        self.values_ = vt
        self.value_, self.start_node_ = value_at_belief(vt, model.initial_belief)
        return self

    def _initial(self, model):
        if self.initial_actions is None:
            return make_initial(model, [0] * model.n_agents)
        return make_initial(model, self.initial_actions)

    def _capacity(self, model, exc):
        warnings.warn(f"stopped early: {exc}", CapacityWarning, stacklevel=3)
        jc, log = exc.partial
        return self._finish(model, jc, log, exc.reason)


class PolicyIteration(_ControllerSolver):
    """Exhaustive backups followed by value-preserving transformations.

    Parameters
    ----------
    epsilon : float
        Stop after iteration t once ``beta**(t+1) * R_max / (1 - beta) <= epsilon``.
    bounded_updates : bool
        Run bounded backups on every node after each reduction pass.
    vpt_slack : float
        Accept reductions that lose at most this much value per step.
    max_iter : int or None
    max_nodes : int
        Per-agent node cap checked before every backup.
    max_seconds : float
    initial_actions : sequence of int or None
        Action of each agent's single starting node (default: action 0).

    Attributes
    ----------
    controller_, log_, termination_, values_, value_, start_node_
    """

    def __init__(self, epsilon=0.1, bounded_updates=False, vpt_slack=0.0, max_iter=None,
                 max_nodes=DEFAULT_MAX_NODES, max_seconds=DEFAULT_MAX_SECONDS,
                 initial_actions=None):
        self.epsilon = epsilon
        self.bounded_updates = bounded_updates
        self.vpt_slack = vpt_slack
        self.max_iter = max_iter
        self.max_nodes = max_nodes
        self.max_seconds = max_seconds
        self.initial_actions = initial_actions

    def fit(self, model, y=None):
        model = _check_model(model)
        if self.vpt_slack < 0:
            raise DecPomdpError("vpt_slack must be non-negative")
        try:
            jc, log = policy_iteration(
                model, self._initial(model), self.epsilon,
                bounded_updates=self.bounded_updates, vpt_slack=self.vpt_slack,
                max_nodes=self.max_nodes, max_seconds=self.max_seconds,
                max_iter=self.max_iter)
        except CapacityError as exc:
            return self._capacity(model, exc)
        return self._finish(model, jc, log, log.termination)


class HeuristicPolicyIteration(_ControllerSolver):
    """Point-directed policy iteration.

    Parameters
    ----------
    k : int
        Belief points per agent.
    others : list of FixedAgentPolicy or None
        Policies assumed for the other agents while generating points.
    seed : int or None
    successors : {"keep", "redirect"}
        How nodes reachable from retained nodes are treated.
    """

    def __init__(self, k=10, others=None, seed=None, successors="keep", max_iter=None,
                 max_nodes=DEFAULT_MAX_NODES, max_seconds=DEFAULT_MAX_SECONDS,
                 initial_actions=None):
        self.k = k
        self.others = others
        self.seed = seed
        self.successors = successors
        self.max_iter = max_iter
        self.max_nodes = max_nodes
        self.max_seconds = max_seconds
        self.initial_actions = initial_actions

    def fit(self, model, y=None):
        model = _check_model(model)
        try:
            jc, log = heuristic_policy_iteration(
                model, self.k, self.others, self.seed, jc0=self._initial(model),
                max_nodes=self.max_nodes, max_seconds=self.max_seconds,
                max_iter=self.max_iter, successors=self.successors)
        except CapacityError as exc:
            return self._capacity(model, exc)
        return self._finish(model, jc, log, log.termination)


class BoundedPolicyIteration(BaseEstimator):
    """Repeated bounded backups on fixed-size controllers, best of several runs.

    Attributes
    ----------
    controller_ : best final controller over the restarts
    value_ : its value at the initial belief
    run_values_ : final value of every restart
    traces_ : per-restart value traces, shape (restarts, steps + 1)
    """

    def __init__(self, sizes=4, device_size=1, steps=200, restarts=20, seed=None):
        self.sizes = sizes
        self.device_size = device_size
        self.steps = steps
        self.restarts = restarts
        self.seed = seed

    def fit(self, model, y=None):
        model = _check_model(model)
        sizes = ((self.sizes,) * model.n_agents if np.ndim(self.sizes) == 0
                 else tuple(self.sizes))
        if len(sizes) != model.n_agents or min(sizes) < 1 or self.device_size < 1:
            raise DecPomdpError("sizes must be positive, one per agent")
        if self.restarts < 1 or self.steps < 0:
            raise DecPomdpError("need restarts >= 1 and steps >= 0")
        seeds = np.random.SeedSequence(self.seed).spawn(self.restarts)
        best, traces = None, []
        for ss in seeds:
            jc, trace = bounded_pi_run(model, sizes, self.device_size, self.steps,
                                       seed=np.random.default_rng(ss))
            traces.append(trace)
            if best is None or trace[-1] > best[1][-1]:
                best = (jc, trace)
        self.traces_ = np.array(traces)
        self.run_values_ = self.traces_[:, -1]
        self.controller_ = best[0]
        self.value_ = float(best[1][-1])
        self.termination_ = "steps"
        return self
