"""Reading and writing the text problem-file format (see docs/dpomdp_format.md)."""

import re

import numpy as np

from .exceptions import DecPomdpError, ParseError
from .model import DecPomdp

_LABEL = re.compile(r"^[A-Za-z_][A-Za-z0-9_.\-]*$")


class _Header:
    def __init__(self):
        self.agents = None
        self.discount = None
        self.values = None
        self.states = None
        self.actions = []
        self.observations = []
        self.start = None
        self.name = None


def _parse_set(tokens, line, what):
    """``n`` or a list of labels; returns (size, labels or None)."""
    if not tokens:
        raise ParseError(f"empty {what} declaration", line=line)
    if len(tokens) == 1 and tokens[0].isdigit():
        n = int(tokens[0])
        if n < 1:
            raise ParseError(f"{what} count must be positive", line=line)
        return n, None
    for t in tokens:
        if not _LABEL.match(t):
            raise ParseError(f"bad {what} label {t!r}", line=line)
    if len(set(tokens)) != len(tokens):
        raise ParseError(f"duplicate {what} label", line=line)
    return len(tokens), list(tokens)


def _lookup(token, size, labels, line, what):
    """Indices selected by one token: ``*``, an index, or a label."""
    if token == "*":
        return list(range(size))
    if token.isdigit():
        k = int(token)
        if k >= size:
            raise ParseError(f"{what} index {k} out of range (size {size})", line=line)
        return [k]
    if labels and token in labels:
        return [labels.index(token)]
    raise ParseError(f"unknown {what} {token!r}", line=line)


def _floats(tokens, line):
    try:
        return [float(t) for t in tokens]
    except ValueError:
        raise ParseError(f"expected numbers, got {' '.join(tokens)!r}", line=line) from None


def parse_dpomdp(text):
    """Parse problem-file text into a validated :class:`DecPomdp`."""
    lines = text.splitlines()
    hdr = _Header()
    body = []
    pending = None  # ("actions" | "observations", remaining count)
    for n, raw in enumerate(lines, start=1):
        ln = raw.split("#", 1)[0].strip()
        if not ln:
            continue
        if pending is not None:
            kind, remaining = pending
            getattr(hdr, kind).append(_parse_set(ln.split(), n, kind[:-1]) + (n,))
            pending = (kind, remaining - 1) if remaining > 1 else None
            continue
        key, sep, rest = ln.partition(":")
        key = key.strip()
        if not sep:
            raise ParseError(f"expected 'key: value', got {ln!r}", line=n)
        if key in ("T", "O", "R"):
            body.append((n, key, rest))
            continue
        if body:
            raise ParseError(f"header line {key!r} after the first T/O/R line", line=n)
        rest = rest.strip()
        if key == "agents":
            if not rest.isdigit() or int(rest) < 1:
                raise ParseError("agents must be a positive integer", line=n)
            hdr.agents = int(rest)
        elif key == "discount":
            (beta,) = _floats([rest], n)
            hdr.discount = beta
        elif key == "values":
            if rest != "reward":
                raise ParseError("only 'values: reward' is supported", line=n)
            hdr.values = rest
        elif key == "states":
            hdr.states = _parse_set(rest.split(), n, "state")
        elif key in ("actions", "observations"):
            if hdr.agents is None:
                raise ParseError(f"'{key}' before 'agents'", line=n)
            if rest:
                raise ParseError(f"'{key}:' takes one following line per agent", line=n)
            pending = (key, hdr.agents)
        elif key == "name":
            if not _LABEL.match(rest):
                raise ParseError(f"bad model name {rest!r}", line=n)
            hdr.name = rest
        elif key == "start":
            hdr.start = (rest.split(), n)
        else:
            raise ParseError(f"unknown header key {key!r}", line=n)
    if pending is not None:
        raise ParseError(f"missing {pending[0]} lines for some agents", line=len(lines))
    for name in ("agents", "discount", "states", "start"):
        if getattr(hdr, name) is None:
            raise ParseError(f"missing '{name}:' header", line=len(lines) or 1)
    if len(hdr.actions) != hdr.agents or len(hdr.observations) != hdr.agents:
        raise ParseError("need one actions and one observations line per agent",
                         line=len(lines) or 1)

    n_states, state_labels = hdr.states
    n_act = tuple(a[0] for a in hdr.actions)
    n_obs = tuple(o[0] for o in hdr.observations)
    act_labels = [a[1] for a in hdr.actions]
    obs_labels = [o[1] for o in hdr.observations]
    n_ja, n_jo = int(np.prod(n_act)), int(np.prod(n_obs))
    t = np.zeros((n_states, n_ja, n_states))
    o = np.zeros((n_ja, n_states, n_jo))
    r = np.zeros((n_states, n_ja))

    def joint(tokens, line, sizes, labels, what):
        if tokens == ["*"]:
            return list(range(int(np.prod(sizes))))
        if len(tokens) != len(sizes):
            raise ParseError(f"joint {what} needs {len(sizes)} components", line=line)
        per = [_lookup(tok, sizes[i], labels[i], line, what) for i, tok in enumerate(tokens)]
        grids = np.meshgrid(*per, indexing="ij")
        return sorted(set(np.ravel_multi_index([g.ravel() for g in grids], sizes).tolist()))

    def states(tok, line):
        return _lookup(tok, n_states, state_labels, line, "state")

    for n, key, rest in body:
        fields = [f.strip() for f in rest.split(":")]
        jas = joint(fields[0].split(), n, n_act, act_labels, "action")
        if key == "T":
            if len(fields) == 2 and fields[1] in ("uniform", "identity"):
                for ja in jas:
                    t[:, ja] = (np.full((n_states, n_states), 1.0 / n_states)
                                if fields[1] == "uniform" else np.eye(n_states))
            elif len(fields) == 3:
                row = _row(fields[2].split(), n_states, n)
                for ja in jas:
                    for s in states(fields[1], n):
                        t[s, ja] = row
            elif len(fields) == 4:
                (p,) = _floats([fields[3]], n)
                for ja in jas:
                    for s in states(fields[1], n):
                        for s2 in states(fields[2], n):
                            t[s, ja, s2] = p
            else:
                raise ParseError("malformed T line", line=n)
        elif key == "O":
            if len(fields) == 2 and fields[1] == "uniform":
                for ja in jas:
                    o[ja] = 1.0 / n_jo
            elif len(fields) == 3:
                row = _row(fields[2].split(), n_jo, n)
                for ja in jas:
                    for s2 in states(fields[1], n):
                        o[ja, s2] = row
            elif len(fields) == 4:
                jos = joint(fields[2].split(), n, n_obs, obs_labels, "observation")
                (p,) = _floats([fields[3]], n)
                for ja in jas:
                    for s2 in states(fields[1], n):
                        o[ja, s2, jos] = p
            else:
                raise ParseError("malformed O line", line=n)
        else:
            if len(fields) != 5 or fields[2] != "*" or fields[3] != "*":
                raise ParseError("R lines must read 'R: <a> : <s> : * : * : r'", line=n)
            (val,) = _floats([fields[4]], n)
            for ja in jas:
                for s in states(fields[1], n):
                    r[s, ja] = val

    b0 = _start(hdr.start, n_states, state_labels)
    act_labels = [lab or [f"a{k}" for k in range(m)] for lab, m in zip(act_labels, n_act)]
    obs_labels = [lab or [f"o{k}" for k in range(m)] for lab, m in zip(obs_labels, n_obs)]
    try:
        return DecPomdp(t, o, r, hdr.discount, b0, n_act, n_obs, state_labels,
                        act_labels, obs_labels, name=hdr.name)
    except ParseError:
        raise
    except DecPomdpError as exc:
        raise DecPomdpError(f"invalid model: {exc}") from None


def _row(tokens, size, line):
    if tokens == ["uniform"]:
        return np.full(size, 1.0 / size)
    vals = _floats(tokens, line)
    if len(vals) != size:
        raise ParseError(f"expected {size} probabilities, got {len(vals)}", line=line)
    return np.array(vals)


def _start(spec, n_states, labels):
    tokens, line = spec
    if tokens == ["uniform"]:
        return np.full(n_states, 1.0 / n_states)
    if n_states == 1 and len(tokens) == 1 and tokens[0] in ("0", "1", "1.0"):
        # "start: 1" with one state is both an index and a probability row
        return np.ones(1)
    if len(tokens) == 1:
        b = np.zeros(n_states)
        b[_lookup(tokens[0], n_states, labels, line, "state")[0]] = 1.0
        return b
    vals = _floats(tokens, line)
    if len(vals) != n_states:
        raise ParseError(f"start needs {n_states} probabilities", line=line)
    return np.array(vals)


def _fmt(x):
    return format(float(x), ".17g")


def serialize_dpomdp(model, header_lines=()):
    """Problem-file text for ``model``; only nonzero T/O/R entries are written."""
    out = [f"# {h}" for h in header_lines]
    n = model.n_agents
    if model.name and _LABEL.match(model.name):
        out.append(f"name: {model.name}")
    out.append(f"agents: {n}")
    out.append(f"discount: {_fmt(model.discount)}")
    out.append("values: reward")
    sl = model.state_labels
    out.append(f"states: {' '.join(sl) if sl and _labels_ok(sl) else model.n_states}")
    out.append("start: " + " ".join(_fmt(p) for p in model.initial_belief))
    out.append("actions:")
    for i in range(n):
        labels = model.action_labels[i] if model.action_labels else None
        out.append(" ".join(labels) if labels and _labels_ok(labels) else str(model.n_actions[i]))
    out.append("observations:")
    for i in range(n):
        labels = model.observation_labels[i] if model.observation_labels else None
        out.append(" ".join(labels) if labels and _labels_ok(labels)
                   else str(model.n_observations[i]))
    jas = model.joint_actions()
    jos = model.joint_observations()
    for ja, a in enumerate(jas):
        atok = " ".join(map(str, a))
        for s in range(model.n_states):
            for s2 in np.flatnonzero(model.transition[s, ja]):
                out.append(f"T: {atok} : {s} : {s2} : {_fmt(model.transition[s, ja, s2])}")
    for ja, a in enumerate(jas):
        atok = " ".join(map(str, a))
        for s2 in range(model.n_states):
            for jo in np.flatnonzero(model.observation[ja, s2]):
                otok = " ".join(map(str, jos[jo]))
                out.append(f"O: {atok} : {s2} : {otok} : {_fmt(model.observation[ja, s2, jo])}")
    for ja, a in enumerate(jas):
        atok = " ".join(map(str, a))
        for s in range(model.n_states):
            if model.reward[s, ja] != 0:
                out.append(f"R: {atok} : {s} : * : * : {_fmt(model.reward[s, ja])}")
    return "\n".join(out) + "\n"


def _labels_ok(labels):
    return (all(_LABEL.match(x) for x in labels) and len(set(labels)) == len(labels)
            and not all(x.isdigit() for x in labels))
