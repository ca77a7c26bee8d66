"""Thin wrapper over ``scipy.optimize.linprog`` (HiGHS) for the
maximize-epsilon programs, with an optional CPLEX-LP text dump."""

import itertools
import os

import numpy as np
import scipy.sparse as sp
from scipy.optimize import linprog

from .exceptions import SolverError

_dump_dir = None
_dump_counter = itertools.count()


def set_lp_dump(directory):
    """Write every subsequent LP to ``directory`` in CPLEX LP format (None disables)."""
    global _dump_dir
    _dump_dir = directory
    if directory is not None:
        os.makedirs(directory, exist_ok=True)


# tried in order; HiGHS occasionally reports an unknown model status on
# badly scaled instances and a different algorithm usually recovers
_ATTEMPTS = (
    ("highs", {"primal_feasibility_tolerance": 1e-10, "dual_feasibility_tolerance": 1e-10}),
    ("highs-ds", {"presolve": False}),
    ("highs-ipm", {}),
)


def _linprog(c, a_ub, b_ub, a_eq, b_eq, bounds, tag):
    res = None
    for method, options in _ATTEMPTS:
        res = linprog(c, A_ub=a_ub, b_ub=b_ub, A_eq=a_eq, b_eq=b_eq, bounds=bounds,
                      method=method, options=options)
        if res.status == 0:
            return res
    raise SolverError(f"{tag}: linprog failed ({res.status}): {res.message}")


def max_epsilon(a_ub, b_ub, a_eq, b_eq, names=None, tag="lp", return_duals=False):
    """Solve ``max eps`` s.t. ``a_ub @ x + eps <= b_ub``, ``a_eq @ x = b_eq``, ``x >= 0``.

    ``eps`` is free. Returns ``(eps, x)``, plus the nonnegative row duals of
    the inequality block (they sum to one) when ``return_duals`` is set. Any
    solver failure is raised as ``SolverError``: all programs built here keep
    a feasible incumbent.
    """
    m, n = a_ub.shape
    c = np.zeros(n + 1)
    c[-1] = -1.0
    if sp.issparse(a_ub) or sp.issparse(a_eq):
        a_ub_full = sp.hstack([sp.csr_matrix(a_ub), np.ones((m, 1))], format="csr")
        a_eq_full = sp.hstack([sp.csr_matrix(a_eq), np.zeros((a_eq.shape[0], 1))], format="csr")
    else:
        a_ub_full = np.hstack([np.asarray(a_ub, dtype=float), np.ones((m, 1))])
        a_eq_full = np.hstack([np.asarray(a_eq, dtype=float), np.zeros((a_eq.shape[0], 1))])
    bounds = [(0, None)] * n + [(None, None)]
    if _dump_dir is not None:
        _write_lp(os.path.join(_dump_dir, f"{tag}_{next(_dump_counter):06d}.lp"),
                  c, a_ub_full, b_ub, a_eq_full, b_eq, names)
    res = _linprog(c, a_ub_full, b_ub, a_eq_full, b_eq, bounds, tag)
    eps, x = float(res.x[-1]), np.clip(res.x[:-1], 0.0, None)
    if return_duals:
        y = np.clip(-np.asarray(res.ineqlin.marginals), 0.0, None)
        total = y.sum()
        y = y / total if total > 0 else np.full(m, 1.0 / m)
        return eps, x, y
    return eps, x


def mixture_epsilon(target, rest, threshold=-np.inf, tag="lp", batch=25, start=50):
    """Best eps with ``target + eps <= rest @ x`` for ``x`` in the simplex.

    Column generation: starts from the columns that are best in some row
    (at most ``start``), then repeatedly prices all columns with the row
    duals of the restricted program. Any row distribution ``y`` bounds the
    optimum by ``max_k y @ rest[:, k] - y @ target``, so the search also
    stops once that bound falls below ``threshold``; the returned eps is
    then that (valid) upper bound and ``x`` is None.
    """
    m, n = rest.shape
    if n <= start:
        eps, x = max_epsilon(-rest, -target, np.ones((1, n)), [1.0], tag=tag)
        return eps, x
    best = np.unique(np.argmax(rest - target[:, None], axis=1))
    if len(best) > start:
        counts = np.bincount(np.argmax(rest, axis=1), minlength=n)[best]
        best = best[np.argsort(-counts, kind="stable")[:start]]
    cols = sorted(int(k) for k in best)
    while True:
        sub = rest[:, cols]
        eps, xs, y = max_epsilon(-sub, -target, np.ones((1, len(cols))), [1.0], tag=tag,
                                 return_duals=True)
        profit = y @ rest
        bound = float(profit.max() - y @ target)
        if bound < threshold:
            return bound, None
        if bound <= eps + 1e-10:
            x = np.zeros(n)
            x[cols] = xs
            return eps, x
        have = set(cols)
        order = [int(k) for k in np.argsort(-profit, kind="stable") if int(k) not in have]
        cols = sorted(have | set(order[:batch]))


def max_total_gain(a_ub, b_ub, a_eq, b_eq, floor, tag="lp"):
    """Second stage: with every ``a_ub`` row held at slack ``>= floor``, maximize
    the summed slack ``sum(b_ub - a_ub @ x)``. Returns ``(gain, x)`` where gain is
    the achieved summed slack."""
    if sp.issparse(a_ub):
        weights = np.asarray(a_ub.sum(axis=0)).ravel()
    else:
        weights = np.asarray(a_ub, dtype=float).sum(axis=0)
    b_shift = np.asarray(b_ub, dtype=float) - floor
    if _dump_dir is not None:
        _write_lp(os.path.join(_dump_dir, f"{tag}_{next(_dump_counter):06d}.lp"),
                  np.append(weights, 0.0), _with_zero_col(a_ub), b_shift,
                  _with_zero_col(a_eq), b_eq, None)
    res = _linprog(weights, a_ub, b_shift, a_eq, b_eq, (0, None), tag)
    x = np.clip(res.x, 0.0, None)
    return float(np.sum(b_ub) - weights @ x), x


def _with_zero_col(a):
    if sp.issparse(a):
        return sp.hstack([a, sp.csr_matrix((a.shape[0], 1))], format="csr")
    return np.hstack([np.asarray(a, dtype=float), np.zeros((a.shape[0], 1))])


def _write_lp(path, c, a_ub, b_ub, a_eq, b_eq, names):
    n = len(c)
    if sp.issparse(a_ub):
        a_ub, a_eq = a_ub.toarray(), a_eq.toarray()
    names = list(names or [f"x{k}" for k in range(n - 1)]) + ["eps"]

    def expr(row):
        terms = [f"{'+' if v >= 0 else '-'} {abs(v):.17g} {names[k]}"
                 for k, v in enumerate(row) if v != 0]
        return " ".join(terms) if terms else "0 eps"

    lines = ["\\ generated by decpi", "Maximize", f" obj: {expr(-c)}", "Subject To"]
    for k, (row, rhs) in enumerate(zip(a_ub, b_ub)):
        lines.append(f" ub{k}: {expr(row)} <= {rhs:.17g}")
    for k, (row, rhs) in enumerate(zip(a_eq, b_eq)):
        lines.append(f" eq{k}: {expr(row)} = {rhs:.17g}")
    lines += ["Bounds", " eps free", "End", ""]
    with open(path, "w") as fh:
        fh.write("\n".join(lines))
