"""DEC-POMDP model container and belief updates under fixed teammate policies."""

from itertools import product

import numpy as np

from ._validation import check_belief, check_discount, check_distribution, check_index
from .exceptions import DecPomdpError, UnreachableObservationError


def _freeze(a):
    a = np.ascontiguousarray(a, dtype=float)
    a.setflags(write=False)
    return a


class DecPomdp:
    """A cooperative decentralized POMDP with a shared reward.

    Joint actions and joint observations are flattened row-major over agents,
    agent 0 being the most significant digit, so ``joint_action_index((a0, a1))
    == a0 * n_actions[1] + a1``.

    Parameters
    ----------
    transition : array of shape (n_states, n_joint_actions, n_states)
        ``transition[s, a, s2] = P(s2 | s, a)``.
    observation : array of shape (n_joint_actions, n_states, n_joint_observations)
        ``observation[a, s2, o] = P(o | a, s2)``.
    reward : array of shape (n_states, n_joint_actions)
    discount : float in [0, 1)
    initial_belief : array of shape (n_states,)
    n_actions, n_observations : sequence of int, one entry per agent
    state_labels, action_labels, observation_labels : optional label lists
    """

    def __init__(self, transition, observation, reward, discount, initial_belief,
                 n_actions, n_observations, state_labels=None, action_labels=None,
                 observation_labels=None, name=None):
        n_actions = tuple(int(n) for n in n_actions)
        n_observations = tuple(int(n) for n in n_observations)
        if len(n_actions) != len(n_observations) or not n_actions:
            raise DecPomdpError("need one action and one observation set per agent")
        if min(n_actions) < 1 or min(n_observations) < 1:
            raise DecPomdpError("every agent needs at least one action and one observation")
        transition = np.asarray(transition, dtype=float)
        observation = np.asarray(observation, dtype=float)
        reward = np.asarray(reward, dtype=float)
        n_states = transition.shape[0]
        ja, jo = int(np.prod(n_actions)), int(np.prod(n_observations))
        if transition.shape != (n_states, ja, n_states):
            raise DecPomdpError(
                f"transition has shape {transition.shape}, expected {(n_states, ja, n_states)}")
        if observation.shape != (ja, n_states, jo):
            raise DecPomdpError(
                f"observation has shape {observation.shape}, expected {(ja, n_states, jo)}")
        if reward.shape != (n_states, ja):
            raise DecPomdpError(f"reward has shape {reward.shape}, expected {(n_states, ja)}")
        if not np.all(np.isfinite(reward)):
            raise DecPomdpError("reward contains non-finite entries")
        check_distribution(transition, name="transition")
        check_distribution(observation, name="observation")

        self.n_actions = n_actions
        self.n_observations = n_observations
        self.transition = _freeze(np.clip(transition, 0.0, None))
        self.observation = _freeze(np.clip(observation, 0.0, None))
        self.reward = _freeze(reward)
        self.discount = check_discount(discount)
        self.initial_belief = _freeze(check_belief(initial_belief, n_states))
        self.state_labels = list(state_labels) if state_labels is not None else [
            f"s{k}" for k in range(n_states)]
        self.action_labels = [list(x) for x in action_labels] if action_labels is not None else [
            [f"a{k}" for k in range(n)] for n in n_actions]
        self.observation_labels = (
            [list(x) for x in observation_labels] if observation_labels is not None
            else [[f"o{k}" for k in range(n)] for n in n_observations])
        if len(self.state_labels) != n_states:
            raise DecPomdpError("wrong number of state labels")
        for i in range(self.n_agents):
            if len(self.action_labels[i]) != n_actions[i]:
                raise DecPomdpError(f"wrong number of action labels for agent {i}")
            if len(self.observation_labels[i]) != n_observations[i]:
                raise DecPomdpError(f"wrong number of observation labels for agent {i}")
        self.name = name
        self._trans_obs = None

    # -- sizes -------------------------------------------------------------
    @property
    def n_agents(self):
        return len(self.n_actions)

    @property
    def n_states(self):
        return self.transition.shape[0]

    @property
    def n_joint_actions(self):
        return self.transition.shape[1]

    @property
    def n_joint_observations(self):
        return self.observation.shape[2]

    @property
    def r_max(self):
        """Largest absolute immediate reward."""
        return float(np.max(np.abs(self.reward))) if self.reward.size else 0.0

    # -- joint indexing ----------------------------------------------------
    def joint_action_index(self, actions):
        return int(np.ravel_multi_index(tuple(actions), self.n_actions))

    def joint_observation_index(self, observations):
        return int(np.ravel_multi_index(tuple(observations), self.n_observations))

    def joint_actions(self):
        return list(product(*(range(n) for n in self.n_actions)))

    def joint_observations(self):
        return list(product(*(range(n) for n in self.n_observations)))

    def trans_obs(self):
        """``P(s2, o | s, a)`` as an array of shape (ja, jo, s, s2), cached."""
        if self._trans_obs is None:
            t = np.transpose(self.transition, (1, 0, 2))          # a, s, s2
            o = np.transpose(self.observation, (0, 2, 1))         # a, o, s2
            to = t[:, None, :, :] * o[:, :, None, :]
            self._trans_obs = _freeze(to)
        return self._trans_obs

    def nonzero_action_observations(self):
        """List of (joint_action, joint_observation) pairs with any mass."""
        to = self.trans_obs()
        mass = to.reshape(to.shape[0], to.shape[1], -1).max(axis=2)
        return [tuple(int(x) for x in ij) for ij in np.argwhere(mass > 0)]

    def allclose(self, other, atol=1e-12):
        return (
            self.n_actions == other.n_actions
            and self.n_observations == other.n_observations
            and self.transition.shape == other.transition.shape
            and abs(self.discount - other.discount) <= atol
            and np.allclose(self.transition, other.transition, rtol=0, atol=atol)
            and np.allclose(self.observation, other.observation, rtol=0, atol=atol)
            and np.allclose(self.reward, other.reward, rtol=0, atol=atol)
            and np.allclose(self.initial_belief, other.initial_belief, rtol=0, atol=atol)
        )

    def with_initial_belief(self, belief):
        return DecPomdp(self.transition, self.observation, self.reward, self.discount, belief,
                        self.n_actions, self.n_observations, self.state_labels,
                        self.action_labels, self.observation_labels, self.name)

    def __repr__(self):
        return (f"DecPomdp(name={self.name!r}, agents={self.n_agents}, states={self.n_states}, "
                f"actions={self.n_actions}, observations={self.n_observations}, "
                f"discount={self.discount})")


class FixedAgentPolicy:
    """State-conditioned action distribution of all agents except ``agent``.

    ``action_probs[s, k]`` is the probability that the other agents play the
    k-th joint action of the remaining agents (row-major, ascending agent index).
    """

    def __init__(self, model, agent, action_probs):
        self.agent = check_index(agent, model.n_agents, "agent")
        others = [n for j, n in enumerate(model.n_actions) if j != self.agent]
        k = int(np.prod(others)) if others else 1
        p = np.asarray(action_probs, dtype=float)
        if p.ndim == 1:
            p = np.tile(p, (model.n_states, 1))
        if p.shape != (model.n_states, k):
            raise DecPomdpError(f"fixed policy has shape {p.shape}, expected {(model.n_states, k)}")
        self.action_probs = _freeze(check_distribution(p, name="fixed policy"))
        self.other_sizes = tuple(others)

    @classmethod
    def from_agent_policies(cls, model, agent, policies):
        """Product of independent per-agent policies.

        ``policies[j]`` is an array of shape (n_states, n_actions[j]) or
        (n_actions[j],); the entry for ``agent`` itself is ignored.
        """
        table = np.ones((model.n_states, 1))
        for j in range(model.n_agents):
            if j == agent:
                continue
            pj = np.asarray(policies[j], dtype=float)
            if pj.ndim == 1:
                pj = np.tile(pj, (model.n_states, 1))
            check_distribution(pj, name=f"policy of agent {j}")
            table = (table[:, :, None] * pj[:, None, :]).reshape(model.n_states, -1)
        return cls(model, agent, table)

    @classmethod
    def uniform(cls, model, agent):
        return cls.from_agent_policies(
            model, agent, [np.full(n, 1.0 / n) for n in model.n_actions])


def _unnormalized_update(model, b, agent, a_i, others):
    """Return N[s2, o_i] = sum_{a_-i, o_-i, s} P(o|a,s2) T(s2|s,a) P(a_-i|s) b(s)."""
    shape_o = model.n_observations
    num = np.zeros((model.n_states, shape_o[agent]))
    other_axes = tuple(j for j in range(model.n_agents) if j != agent)
    for k, a_rest in enumerate(product(*(range(n) for n in others.other_sizes))):
        acts = list(a_rest)
        acts.insert(agent, a_i)
        ja = model.joint_action_index(acts)
        w = b * others.action_probs[:, k]
        if not w.any():
            continue
        s2 = w @ model.transition[:, ja, :]
        obs = model.observation[ja].reshape((model.n_states,) + shape_o)
        marg = obs.sum(axis=tuple(1 + j for j in other_axes)) if other_axes else obs
        num += s2[:, None] * marg
    return num


def observation_likelihood(model, b, agent, a_i, others):
    """Distribution of agent ``agent``'s next observation after playing ``a_i``.

    The other agents draw actions from ``others`` given the current state.
    """
    b = check_belief(b, model.n_states)
    agent = check_index(agent, model.n_agents, "agent")
    a_i = check_index(a_i, model.n_actions[agent], "action")
    if others.agent != agent:
        raise DecPomdpError("fixed policy was built for a different agent")
    return _unnormalized_update(model, b, agent, a_i, others).sum(axis=0)


def belief_update(model, b, agent, a_i, o_i, others):
    """Bayes update of the state belief from agent ``agent``'s point of view.

    Raises
    ------
    UnreachableObservationError
        If ``o_i`` has zero probability under ``b``, ``a_i`` and ``others``.
    """
    b = check_belief(b, model.n_states)
    agent = check_index(agent, model.n_agents, "agent")
    a_i = check_index(a_i, model.n_actions[agent], "action")
    o_i = check_index(o_i, model.n_observations[agent], "observation")
    if others.agent != agent:
        raise DecPomdpError("fixed policy was built for a different agent")
    col = _unnormalized_update(model, b, agent, a_i, others)[:, o_i]
    z = col.sum()
    if z <= 0.0:
        raise UnreachableObservationError(
            f"observation {o_i} has zero probability after action {a_i}")
    return col / z


def random_decpomdp(n_states, n_actions, n_observations, rng, discount=0.9,
                    reward_scale=10.0, sparsity=0.0):
    """Random dense model, mostly for tests and oracle cross-checks."""
    n_actions, n_observations = tuple(n_actions), tuple(n_observations)
    ja, jo = int(np.prod(n_actions)), int(np.prod(n_observations))
    t = rng.random((n_states, ja, n_states))
    o = rng.random((ja, n_states, jo))
    if sparsity:
        t *= rng.random(t.shape) >= sparsity
        o *= rng.random(o.shape) >= sparsity
        t[..., 0] += 1e-3
        o[..., 0] += 1e-3
    t /= t.sum(axis=2, keepdims=True)
    o /= o.sum(axis=2, keepdims=True)
    r = rng.uniform(-reward_scale, reward_scale, size=(n_states, ja))
    b0 = rng.random(n_states)
    b0 /= b0.sum()
    return DecPomdp(t, o, r, discount, b0, n_actions, n_observations, name="random")

