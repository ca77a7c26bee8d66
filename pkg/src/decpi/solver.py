"""Exhaustive backups and the policy-iteration driver."""

import csv
import io
import math
import time
from dataclasses import asdict, dataclass, field
from itertools import product

import numpy as np

from ._config import get_config
from ._validation import check_discount
from .controller import JointController, LocalController, evaluate, value_at_belief
from .exceptions import CapacityError, DecPomdpError
from .transform import bounded_update_cycle, reduce_all

DEFAULT_MAX_NODES = 4000
DEFAULT_MAX_SECONDS = 4 * 3600.0


def exhaustive_backup_size(n_actions, n_nodes, n_observations):
    """Number of one-step policies: ``|A| * |Q| ** |O|`` (exact integer)."""
    return int(n_actions) * int(n_nodes) ** int(n_observations)


def exhaustive_backup(model, jc, max_nodes=DEFAULT_MAX_NODES):
    """Append one deterministic node per (action, observation -> old node map).

    Old nodes keep their parameters and the device is untouched. New nodes of
    agent i come after the old ones, ordered by action, then by the map read
    as a base-|Q_i| number with observation 0 most significant.

    Raises
    ------
    CapacityError
        When a local controller would exceed ``max_nodes`` nodes or the
        backed-up tables would exceed the configured entry limit.
    """
    jc.check_model(model)
    limit = get_config()["max_table_entries"]
    new_sizes = []
    for i, lc in enumerate(jc.locals):
        added = exhaustive_backup_size(lc.n_actions, lc.n_nodes, lc.n_observations)
        total = lc.n_nodes + added
        if max_nodes is not None and total > max_nodes:
            raise CapacityError(
                f"agent {i} would grow to {total} nodes (limit {max_nodes})")
        if jc.device_size * total * total * lc.n_actions * lc.n_observations > limit:
            raise CapacityError(f"agent {i} transition table with {total} nodes is too large")
        new_sizes.append(total)
    if model.n_states * jc.device_size * math.prod(new_sizes) > limit:
        raise CapacityError(f"joint value table for sizes {tuple(new_sizes)} is too large")

    locals_ = []
    for lc, total in zip(jc.locals, new_sizes):
        nc, q, na, no = lc.n_device, lc.n_nodes, lc.n_actions, lc.n_observations
        maps = np.array(list(product(range(q), repeat=no)), dtype=int).reshape(-1, no)
        k = na * len(maps)
        psi = np.zeros((nc, total, na))
        psi[:, :q] = lc.psi
        eta = np.zeros((nc, total, na, no, total))
        eta[:, :q, :, :, :q] = lc.eta
        acts = np.repeat(np.arange(na), len(maps))
        targets = np.tile(maps, (na, 1))  # (k, no)
        rows = q + np.arange(k)
        psi[:, rows, acts] = 1.0
        for o in range(no):
            # every action row gets the same map so unchosen rows stay valid
            eta[:, rows[:, None], np.arange(na)[None, :], o, targets[:, o][:, None]] = 1.0
        locals_.append(LocalController(psi, eta, validate=False))
    return JointController(locals_, jc.device)


def termination_iterations(beta, r_max, epsilon):
    """Smallest t >= 0 with ``beta**(t+1) * r_max / (1 - beta) <= epsilon``."""
    beta = check_discount(beta)
    if epsilon <= 0:
        raise DecPomdpError("epsilon must be positive")
    if r_max < 0:
        raise DecPomdpError("r_max must be non-negative")
    if beta == 0.0 or r_max == 0.0:
        return 0
    t = max(0, math.ceil(math.log(epsilon * (1 - beta) / r_max) / math.log(beta)) - 1)
    # guard the float estimate with the exact inequality on both sides
    while t > 0 and beta ** t * r_max / (1 - beta) <= epsilon:
        t -= 1
    while beta ** (t + 1) * r_max / (1 - beta) > epsilon:
        t += 1
    return t


def _bound_met(beta, r_max, epsilon, t):
    return beta ** (t + 1) * r_max / (1 - beta) <= epsilon


@dataclass
class IterationRecord:
    t: int
    sizes: tuple
    device_size: int
    backed_up_sizes: tuple
    exhaustive_sizes: tuple
    value_b0: float
    seconds: float
    reductions: int = 0
    bounded_steps: int = 0


@dataclass
class IterationLog:
    """Per-iteration history of a policy-iteration run.

    ``exhaustive_sizes`` follows the pure-backup recurrence
    ``n_t = |A_i| * n_{t-1} ** |O_i|`` from the initial sizes: the controller
    size had no transformation ever been applied.
    """

    records: list = field(default_factory=list)
    termination: str = ""

    CSV_FIELDS = ("t", "agent_sizes", "device_size", "exhaustive_sizes", "value_b0",
                  "seconds", "reductions", "bounded_steps")

    def append(self, record):
        if self.records and record.t <= self.records[-1].t:
            raise ValueError("iteration index must increase")
        self.records.append(record)

    def __len__(self):
        return len(self.records)

    def __getitem__(self, k):
        return self.records[k]

    @property
    def values(self):
        return [r.value_b0 for r in self.records]

    @property
    def sizes(self):
        return [r.sizes for r in self.records]

    def to_csv(self, fh=None, header_lines=(), timings=True):
        """Write one row per iteration; per-agent fields are expanded into columns."""
        own = fh is None
        fh = io.StringIO() if own else fh
        for line in header_lines:
            fh.write(f"# {line}\n")
        if not self.records:
            return fh.getvalue() if own else None
        n = len(self.records[0].sizes)
        cols = (["t"] + [f"size_{i}" for i in range(n)] + ["device_size"]
                + [f"exhaustive_{i}" for i in range(n)]
                + ["value_b0", "seconds", "reductions", "bounded_steps"])
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(cols)
        for r in self.records:
            w.writerow([r.t, *r.sizes, r.device_size, *r.exhaustive_sizes,
                        f"{r.value_b0:.10f}", f"{r.seconds:.3f}" if timings else "",
                        r.reductions, r.bounded_steps])
        return fh.getvalue() if own else None

    def as_dicts(self):
        return [asdict(r) for r in self.records]


def policy_iteration(model, jc0, epsilon, bounded_updates=False, vpt_slack=0.0,
                     max_nodes=DEFAULT_MAX_NODES, max_seconds=DEFAULT_MAX_SECONDS,
                     max_iter=None, callback=None):
    """Alternate exhaustive backups and value-preserving transformations.

    After each backup the controller is reduced to a fixed point (with optional
    slack ``vpt_slack``) and, when ``bounded_updates`` is set, every node is
    bounded-backed-up until no node improves. Stops once
    ``beta**(t+1) * R_max / (1 - beta) <= epsilon`` or after ``max_iter``
    iterations.

    Returns ``(controller, log)``. Running out of nodes, memory or time raises
    ``CapacityError`` whose ``partial`` is ``(last_controller, log)``.
    ``callback(t, controller, log)`` is called after every iteration.
    """
    jc0.check_model(model)
    if epsilon <= 0:
        raise DecPomdpError("epsilon must be positive")
    start = time.perf_counter()
    log = IterationLog()
    jc = jc0
    vt = evaluate(model, jc)
    exhaustive = jc.sizes
    log.append(IterationRecord(0, jc.sizes, jc.device_size, jc.sizes, exhaustive,
                               value_at_belief(vt, model.initial_belief)[0],
                               time.perf_counter() - start))
    if callback:
        callback(0, jc, log)
    t = 0
    while not _bound_met(model.discount, model.r_max, epsilon, t):
        if max_iter is not None and t >= max_iter:
            log.termination = "max-iterations"
            return jc, log
        try:
            backed = exhaustive_backup(model, jc, max_nodes=max_nodes)
            _check_clock(start, max_seconds)
            reduced, removals, vt = reduce_all(model, backed, slack=vpt_slack,
                                               return_values=True)
            _check_clock(start, max_seconds)
            steps = 0
            if bounded_updates:
                reduced, steps = bounded_update_cycle(model, reduced, vt)
                vt = evaluate(model, reduced)
        except CapacityError as exc:
            log.termination = exc.reason
            exc.partial = (jc, log)
            raise
        t += 1
        jc = reduced
        exhaustive = tuple(exhaustive_backup_size(model.n_actions[i], exhaustive[i],
                                                  model.n_observations[i])
                           for i in range(model.n_agents))
        log.append(IterationRecord(t, jc.sizes, jc.device_size, backed.sizes, exhaustive,
                                   value_at_belief(vt, model.initial_belief)[0],
                                   time.perf_counter() - start,
                                   sum(removals.values()), steps))
        if callback:
            callback(t, jc, log)
    log.termination = "epsilon-bound"
    return jc, log


def _check_clock(start, max_seconds):
    if max_seconds is not None and time.perf_counter() - start > max_seconds:
        raise CapacityError(f"wall-clock budget of {max_seconds}s exhausted",
                            reason="wall-clock")
