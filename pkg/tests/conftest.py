import numpy as np
import pytest

from decpi import builtin_domain, make_initial
from decpi.model import random_decpomdp
from decpi.solver import policy_iteration


def small_random(seed, n_states=None, discount=0.9):
    """Random 2-agent instance with at most 3 states and 2 actions/observations each."""
    rng = np.random.default_rng(seed)
    s = n_states or int(rng.integers(2, 4))
    acts = tuple(int(rng.integers(1, 3)) for _ in range(2))
    obs = tuple(int(rng.integers(1, 3)) for _ in range(2))
    return random_decpomdp(s, acts, obs, rng, discount=discount)


@pytest.fixture(scope="session")
def tiger():
    return builtin_domain("dec-tiger")


@pytest.fixture(scope="session")
def tiger_exact(tiger):
    """Exact PI on dec-tiger through iteration 3 (a few minutes)."""
    return policy_iteration(tiger, make_initial(tiger, [0, 0]), 0.1, max_iter=3)


def pytest_terminal_summary(terminalreporter):
    lines = []
    for outcome in ("passed", "failed"):
        for rep in terminalreporter.stats.get(outcome, []):
            if getattr(rep, "when", None) != "call":
                continue
            props = dict(rep.user_properties)
            if "criterion" in props:
                lines.append((props["criterion"], outcome.upper(), props.get("detail", "")))
    if lines:
        terminalreporter.section("acceptance criteria")
        for num, outcome, detail in sorted(lines):
            terminalreporter.write_line(f"criterion {num:2d}: {outcome}  {detail}")
