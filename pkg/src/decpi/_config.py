"""Global numerical tolerances, in the style of ``sklearn.get_config``."""

from contextlib import contextmanager

_global_config = {
    # rows of T, O, beliefs and controller parameters must sum to 1 within this
    "dist_tol": 1e-9,
    # an LP optimum eps* >= -dominance_tol counts as eps* >= 0
    "dominance_tol": 1e-9,
    # max-norm residual accepted from controller evaluation
    "eval_tol": 1e-8,
    # joint systems up to this many unknowns are factorized densely
    "dense_limit": 3000,
    # refuse to materialize value tables larger than this
    "max_table_entries": 40_000_000,
    "bounded_refine": True,
}


def get_config():
    """Return a copy of the current tolerance settings."""
    return dict(_global_config)


def set_config(**kwargs):
    unknown = set(kwargs) - set(_global_config)
    if unknown:
        raise KeyError(f"unknown config keys: {sorted(unknown)}")
    _global_config.update(kwargs)


@contextmanager
def config_context(**kwargs):
    old = get_config()
    set_config(**kwargs)
    try:
        yield
    finally:
        _global_config.clear()
        _global_config.update(old)
