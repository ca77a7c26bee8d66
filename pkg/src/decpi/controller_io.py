"""Controller text format and Graphviz export (see docs/controller_format.md)."""

import numpy as np

from .controller import CorrelationDevice, JointController, LocalController
from .exceptions import DecPomdpError, ParseError

MAGIC = "decpi-controller 1"


def _fmt_row(row):
    return " ".join(format(float(x), ".17g") for x in row)


def serialize_controller(jc, header_lines=()):
    """Lossless text form of ``jc``; probabilities use 17 significant digits."""
    out = [f"# {h}" for h in header_lines]
    out.append(MAGIC)
    out.append(f"agents: {jc.n_agents}")
    out.append(f"device: {jc.device_size}")
    for c in range(jc.device_size):
        out.append(f"d {c}: {_fmt_row(jc.device.transition[c])}")
    for i, lc in enumerate(jc.locals):
        out.append(f"agent {i}: nodes {lc.n_nodes} actions {lc.n_actions} "
                   f"observations {lc.n_observations}")
        for c in range(lc.n_device):
            for q in range(lc.n_nodes):
                out.append(f"psi {c} {q}: {_fmt_row(lc.psi[c, q])}")
        for c in range(lc.n_device):
            for q in range(lc.n_nodes):
                for a in range(lc.n_actions):
                    for o in range(lc.n_observations):
                        out.append(f"eta {c} {q} {a} {o}: {_fmt_row(lc.eta[c, q, a, o])}")
    return "\n".join(out) + "\n"


class _Lines:
    def __init__(self, text):
        self.items = [(n, ln.strip()) for n, ln in enumerate(text.splitlines(), start=1)
                      if ln.strip() and not ln.lstrip().startswith("#")]
        self.pos = 0

    def next(self, what):
        if self.pos >= len(self.items):
            last = self.items[-1][0] if self.items else 1
            raise ParseError(f"unexpected end of input, expected {what}", line=last)
        item = self.items[self.pos]
        self.pos += 1
        return item

    def keyed(self, prefix, expect_key, width):
        n, ln = self.next(prefix)
        key, sep, rest = ln.partition(":")
        if not sep or key.split() != expect_key:
            raise ParseError(f"expected '{' '.join(expect_key)}:', got {ln!r}", line=n)
        try:
            vals = np.array([float(v) for v in rest.split()])
        except ValueError:
            raise ParseError("non-numeric probability", line=n) from None
        if len(vals) != width:
            raise ParseError(f"expected {width} probabilities, got {len(vals)}", line=n)
        return vals


def _header_int(lines, key):
    n, ln = lines.next(key)
    k, sep, rest = ln.partition(":")
    if not sep or k.strip() != key or not rest.strip().isdigit():
        raise ParseError(f"expected '{key}: <int>'", line=n)
    return int(rest)


def deserialize_controller(text):
    """Inverse of :func:`serialize_controller`; raises ``ParseError`` on bad input."""
    lines = _Lines(text)
    n, ln = lines.next("header")
    if ln != MAGIC:
        raise ParseError(f"expected {MAGIC!r}", line=n)
    n_agents = _header_int(lines, "agents")
    nc = _header_int(lines, "device")
    if n_agents < 1 or nc < 1:
        raise ParseError("agents and device size must be positive", line=n)
    dev = np.array([lines.keyed("device row", ["d", str(c)], nc) for c in range(nc)])
    locals_ = []
    for i in range(n_agents):
        n, ln = lines.next(f"agent {i}")
        parts = ln.replace(":", " ").split()
        if (len(parts) != 8 or parts[:2] != ["agent", str(i)] or parts[2] != "nodes"
                or parts[4] != "actions" or parts[6] != "observations"
                or not all(p.isdigit() for p in parts[3::2])):
            raise ParseError(f"malformed agent header {ln!r}", line=n)
        nq, na, no = (int(p) for p in parts[3::2])
        psi = np.array([[lines.keyed("psi row", ["psi", str(c), str(q)], na)
                         for q in range(nq)] for c in range(nc)])
        eta = np.array([[[[lines.keyed("eta row", ["eta", str(c), str(q), str(a), str(o)], nq)
                           for o in range(no)] for a in range(na)] for q in range(nq)]
                        for c in range(nc)])
        try:
            locals_.append(LocalController(psi.reshape(nc, nq, na),
                                           eta.reshape(nc, nq, na, no, nq)))
        except DecPomdpError as exc:
            raise ParseError(f"agent {i}: {exc}", line=n) from None
    if lines.pos != len(lines.items):
        raise ParseError("trailing content", line=lines.items[lines.pos][0])
    try:
        return JointController(locals_, CorrelationDevice(dev))
    except DecPomdpError as exc:
        raise ParseError(str(exc), line=1) from None


def _p(x):
    return format(float(x), ".4g")


def export_dot(jc, model=None, header_lines=()):
    """Graphviz text: one digraph per local controller, then one for the device.

    Vertices list their action distribution; all (action, observation)
    transitions between the same pair of nodes share one edge whose label has
    one ``action/observation p`` entry per line (prefixed by the device node
    when there are several).
    """
    out = [f"// {h}" for h in header_lines]
    multi = jc.device_size > 1
    for i, lc in enumerate(jc.locals):
        alab = (model.action_labels[i] if model is not None
                else [f"a{k}" for k in range(lc.n_actions)])
        olab = (model.observation_labels[i] if model is not None
                else [f"o{k}" for k in range(lc.n_observations)])
        out.append(f"digraph agent{i} {{")
        out.append("  rankdir=LR;")
        for q in range(lc.n_nodes):
            acts = []
            for c in range(lc.n_device):
                for a in np.flatnonzero(lc.psi[c, q] > 0):
                    pre = f"c{c} " if multi else ""
                    acts.append(f"{pre}{alab[a]} {_p(lc.psi[c, q, a])}")
            label = "\\n".join([f"q{q}"] + acts)
            out.append(f'  q{q} [label="{label}"];')
        for q in range(lc.n_nodes):
            for q2 in range(lc.n_nodes):
                entries = []
                for c in range(lc.n_device):
                    for a in np.flatnonzero(lc.psi[c, q] > 0):
                        for o in range(lc.n_observations):
                            p = lc.eta[c, q, a, o, q2]
                            if p > 0:
                                pre = f"c{c} " if multi else ""
                                entries.append(f"{pre}{alab[a]}/{olab[o]} {_p(p)}")
                if entries:
                    label = "\\n".join(entries)
                    out.append(f'  q{q} -> q{q2} [label="{label}"];')
        out.append("}")
    out.append("digraph device {")
    for c in range(jc.device_size):
        out.append(f"  c{c};")
    for c in range(jc.device_size):
        for c2 in np.flatnonzero(jc.device.transition[c] > 0):
            out.append(f'  c{c} -> c{c2} [label="{_p(jc.device.transition[c, c2])}"];')
    out.append("}")
    return "\n".join(out) + "\n"
