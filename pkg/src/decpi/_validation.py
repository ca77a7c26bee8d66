"""Input validation helpers shared by the public API."""

import numpy as np

from ._config import get_config
from .exceptions import DecPomdpError


def check_distribution(p, axis=-1, name="distribution", tol=None):
    """Validate that ``p`` holds probability rows along ``axis``.

    Returns ``p`` as a float array. Raises ``DecPomdpError`` naming the first
    offending row.
    """
    tol = get_config()["dist_tol"] if tol is None else tol
    p = np.asarray(p, dtype=float)
    if not np.all(np.isfinite(p)):
        raise DecPomdpError(f"{name} contains non-finite entries")
    if np.any(p < -tol):
        idx = np.unravel_index(np.argmin(p), p.shape)
        raise DecPomdpError(f"{name} has negative entry {p[idx]!r} at {idx}")
    sums = p.sum(axis=axis)
    bad = np.abs(sums - 1.0) > tol
    if np.any(bad):
        idx = tuple(int(i) for i in np.argwhere(bad)[0])
        raise DecPomdpError(
            f"{name} row {idx} sums to {float(np.asarray(sums)[idx])!r}, expected 1"
        )
    return p


def check_belief(b, n_states):
    b = check_distribution(np.ravel(b), name="belief")
    if b.shape != (n_states,):
        raise DecPomdpError(f"belief has {b.shape[0]} entries, model has {n_states} states")
    return b


def check_index(value, size, name):
    if not (0 <= int(value) < size):
        raise DecPomdpError(f"{name} {value} out of range [0, {size})")
    return int(value)


def check_discount(beta):
    beta = float(beta)
    if not (0.0 <= beta < 1.0):
        raise DecPomdpError(f"discount must lie in [0, 1), got {beta}")
    return beta
