import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from decpi import builtin_domain, deserialize_controller, export_dot, make_initial, \
    random_stochastic, serialize_controller
from decpi.exceptions import ParseError


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 100_000), q0=st.integers(1, 3), q1=st.integers(1, 3),
       c=st.integers(1, 2))
def test_round_trip_is_exact(seed, q0, q1, c):
    m = builtin_domain("dec-tiger")
    jc = random_stochastic(m, (q0, q1), c, np.random.default_rng(seed))
    back = deserialize_controller(serialize_controller(jc, ["a header"]))
    assert back == jc
    for a, b in zip(back.locals, jc.locals):
        np.testing.assert_array_equal(a.eta, b.eta)


def test_errors():
    m = builtin_domain("dec-tiger")
    text = serialize_controller(make_initial(m, [0, 0]))
    with pytest.raises(ParseError):
        deserialize_controller("garbage\n")
    with pytest.raises(ParseError) as info:
        deserialize_controller(text.replace("psi 0 0: 1 0 0", "psi 0 0: 1 0"))
    assert info.value.line is not None
    with pytest.raises(ParseError):
        deserialize_controller(text + "extra: 1\n")
    with pytest.raises(ParseError):
        deserialize_controller(text.replace("psi 0 0: 1 0 0", "psi 0 0: 0.5 0 0"))
    lines = text.splitlines()
    with pytest.raises(ParseError):
        deserialize_controller("\n".join(lines[:-1]))


def test_dot_single_node():
    m = builtin_domain("dec-tiger")
    dot = export_dot(make_initial(m, [0, 0]), m)
    assert dot.count("digraph") == 3
    agent0 = dot.split("digraph agent1")[0]
    assert agent0.count("q0 -> q0") == 1
    assert "open-left/" in agent0


def test_dot_vertex_count():
    m = builtin_domain("dec-tiger")
    jc = random_stochastic(m, (3, 3), 1, np.random.default_rng(0))
    dot = export_dot(jc)
    for block in dot.split("digraph")[1:3]:
        assert sum(1 for ln in block.splitlines() if "[label=" in ln and "->" not in ln) == 3
