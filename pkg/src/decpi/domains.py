"""Benchmark problems: two-agent tiger, meeting on a grid, box pushing, and a
two-state coordination problem where correlated randomness pays off."""

from itertools import product

import numpy as np

from .exceptions import DecPomdpError
from .model import DecPomdp

DOMAINS = ("dec-tiger", "meeting-grid", "box-pushing", "correlation-example")


def builtin_domain(name, **params):
    """Construct a named benchmark problem.

    ``correlation-example`` accepts ``R`` (reward magnitude, default 10) and
    every domain accepts ``discount`` (default 0.9).
    """
    builders = {
        "dec-tiger": dec_tiger,
        "meeting-grid": meeting_grid,
        "box-pushing": box_pushing,
        "correlation-example": correlation_example,
    }
    if name not in builders:
        raise DecPomdpError(f"unknown domain {name!r}; choose from {', '.join(DOMAINS)}")
    allowed = {"discount"} | ({"R"} if name == "correlation-example" else set())
    extra = set(params) - allowed
    if extra:
        raise DecPomdpError(f"domain {name!r} does not take parameters {sorted(extra)}")
    return builders[name](**params)


def dec_tiger(discount=0.9, accuracy=0.85):
    # action 0 is open-left so the single-node start controller opens the left door
    actions = ["open-left", "open-right", "listen"]
    OPEN_L, OPEN_R, LISTEN = range(3)
    states = ["tiger-left", "tiger-right"]
    obs = ["hear-left", "hear-right"]
    t = np.zeros((2, 9, 2))
    o = np.zeros((9, 2, 4))
    r = np.zeros((2, 9))
    for a1, a2 in product(range(3), repeat=2):
        ja = a1 * 3 + a2
        both_listen = a1 == LISTEN and a2 == LISTEN
        for s in range(2):
            t[s, ja] = np.eye(2)[s] if both_listen else 0.5
            tiger_door = OPEN_L if s == 0 else OPEN_R
            r[s, ja] = _tiger_reward(a1, a2, tiger_door, LISTEN)
        for s2 in range(2):
            if both_listen:
                p_hear = np.array([accuracy, 1 - accuracy]) if s2 == 0 else np.array(
                    [1 - accuracy, accuracy])
                o[ja, s2] = np.outer(p_hear, p_hear).ravel()
            else:
                o[ja, s2] = 0.25
    return DecPomdp(t, o, r, discount, [0.5, 0.5], (3, 3), (2, 2), states,
                    [actions, actions], [obs, obs], name="dec-tiger")


def _tiger_reward(a1, a2, tiger_door, listen):
    if a1 == listen and a2 == listen:
        return -2.0
    if a1 == listen or a2 == listen:
        opened = a2 if a1 == listen else a1
        return -101.0 if opened == tiger_door else 9.0
    if a1 != a2:
        return -100.0
    return -50.0 if a1 == tiger_door else 20.0


def meeting_grid(discount=0.9, success=0.6):
    """Two robots on a 2x2 grid rewarded for sharing a cell.

    Cells are numbered row-major from the top-left; robots start on the
    bottom-left and top-right cells. A move goes in the intended direction
    with probability ``success``; the remaining mass is split evenly over the
    other three directions and staying put. Moves into walls stay.
    """
    actions = ["up", "down", "left", "right", "stay"]
    deltas = [(-1, 0), (1, 0), (0, -1), (0, 1)]
    obs = ["no-wall", "wall-left", "wall-right", "wall-both"]
    noise = (1.0 - success) / 4.0

    def move(cell, d):
        row, col = divmod(cell, 2)
        nr, nc = row + deltas[d][0], col + deltas[d][1]
        if 0 <= nr < 2 and 0 <= nc < 2:
            return nr * 2 + nc
        return cell

    single = np.zeros((4, 5, 4))  # cell, action, next cell
    for cell in range(4):
        for a in range(4):
            for d in range(4):
                single[cell, a, move(cell, d)] += success if d == a else noise
            single[cell, a, cell] += noise
        single[cell, 4, cell] = 1.0

    def cell_obs(cell):
        # left column sees a wall on its left, right column on its right
        return 1 if cell % 2 == 0 else 2

    states = [f"r1@{c1}-r2@{c2}" for c1 in range(4) for c2 in range(4)]
    t = np.zeros((16, 25, 16))
    o = np.zeros((25, 16, 16))
    r = np.zeros((16, 25))
    for c1, c2 in product(range(4), repeat=2):
        s = c1 * 4 + c2
        for a1, a2 in product(range(5), repeat=2):
            ja = a1 * 5 + a2
            t[s, ja] = np.outer(single[c1, a1], single[c2, a2]).ravel()
            r[s, ja] = 1.0 if c1 == c2 else 0.0
            o[ja, s, cell_obs(c1) * 4 + cell_obs(c2)] = 1.0
    b0 = np.zeros(16)
    b0[2 * 4 + 1] = 1.0  # robot 1 bottom-left (cell 2), robot 2 top-right (cell 1)
    return DecPomdp(t, o, r, discount, b0, (5, 5), (4, 4), states,
                    [actions, actions], [obs, obs], name="meeting-grid")


_HEADINGS = "NESW"


def box_pushing(discount=0.9, move_success=0.9):
    """Cooperative box pushing on a 4x3 grid with 100 states.

    The agents live in the bottom row (agent 0 always left of agent 1) with a
    heading in N/E/S/W: 6 column pairs x 16 headings = 96 states. The middle
    row holds small boxes above columns 0 and 3 and the large box above
    columns 1-2. Pushing a box into the top row leads to one of four delivery
    states (left small, right small, both small, large), each of which resets
    to the start on the next step.
    """
    actions = ["turn-left", "turn-right", "move-forward", "stay"]
    TURN_L, TURN_R, FORWARD, STAY = range(4)
    obs_names = ["empty", "wall", "agent", "small-box", "large-box"]
    EMPTY, WALL, AGENT, SMALL, LARGE = range(5)

    poses = [(c1, h1, c2, h2) for c1 in range(4) for c2 in range(c1 + 1, 4)
             for h1 in range(4) for h2 in range(4)]
    deliveries = ["delivered-small-left", "delivered-small-right",
                  "delivered-small-both", "delivered-large"]
    index = {p: k for k, p in enumerate(poses)}
    n_pose = len(poses)
    n_states = n_pose + len(deliveries)
    start = index[(0, 1, 3, 3)]  # facing each other: E and W
    labels = [f"a0@{c1}{_HEADINGS[h1]}-a1@{c2}{_HEADINGS[h2]}" for c1, h1, c2, h2 in poses]
    labels += deliveries

    def outcome(pose, acts, success):
        """Next state, per-agent blocked flags and box reward for one success draw."""
        cols = [pose[0], pose[2]]
        heads = [pose[1], pose[3]]
        blocked = [False, False]
        new_cols = list(cols)
        pushing = [None, None]
        for k in range(2):
            a = acts[k]
            if a == TURN_L:
                heads[k] = (heads[k] - 1) % 4
            elif a == TURN_R:
                heads[k] = (heads[k] + 1) % 4
            elif a == FORWARD:
                h, c = heads[k], cols[k]
                if h == 2 or (h == 3 and c == 0) or (h == 1 and c == 3):
                    blocked[k] = True
                elif h == 0:
                    pushing[k] = "small" if c in (0, 3) else "large"
                else:
                    target = c + (1 if h == 1 else -1)
                    if target == cols[1 - k]:
                        blocked[k] = True
                    elif success[k]:
                        new_cols[k] = target
        # the large box needs both agents pushing it together
        large_pair = pushing[0] == "large" and pushing[1] == "large"
        for k in range(2):
            if pushing[k] == "large" and not large_pair:
                blocked[k] = True
        if large_pair:
            if success[0] and success[1]:
                return n_pose + 3, blocked, 100.0
            return index[(cols[0], heads[0], cols[1], heads[1])], blocked, 0.0
        small = [pushing[k] == "small" and success[k] for k in range(2)]
        if small[0] or small[1]:
            if small[0] and small[1]:
                return n_pose + 2, blocked, 20.0
            pushed_col = cols[0] if small[0] else cols[1]
            return n_pose + (0 if pushed_col == 0 else 1), blocked, 10.0
        if new_cols[0] == new_cols[1]:
            # simultaneous move into the same free cell: both bounce back
            blocked = [True, True]
            new_cols = list(cols)
        return index[(new_cols[0], heads[0], new_cols[1], heads[1])], blocked, 0.0

    def sees(pose, k):
        c, h = (pose[0], pose[1]) if k == 0 else (pose[2], pose[3])
        other = pose[2] if k == 0 else pose[0]
        if h == 2 or (h == 3 and c == 0) or (h == 1 and c == 3):
            return WALL
        if h == 0:
            return SMALL if c in (0, 3) else LARGE
        return AGENT if c + (1 if h == 1 else -1) == other else EMPTY

    t = np.zeros((n_states, 16, n_states))
    o = np.zeros((16, n_states, 25))
    r = np.zeros((n_states, 16))
    for s, pose in enumerate(poses):
        for a1, a2 in product(range(4), repeat=2):
            ja = a1 * 4 + a2
            movers = [a1 == FORWARD, a2 == FORWARD]
            for succ in product((True, False), repeat=2):
                p = 1.0
                for k in range(2):
                    if movers[k]:
                        p *= move_success if succ[k] else 1.0 - move_success
                    elif not succ[k]:
                        p = 0.0
                if p == 0.0:
                    continue
                s2, blocked, box = outcome(pose, (a1, a2), succ)
                t[s, ja, s2] += p
                r[s, ja] += p * (box - 5.0 * sum(blocked))
            r[s, ja] -= 0.2  # 0.1 per agent per step
    for d in range(len(deliveries)):
        t[n_pose + d, :, start] = 1.0
        r[n_pose + d, :] = -0.2
    for s2 in range(n_states):
        if s2 < n_pose:
            jo = sees(poses[s2], 0) * 5 + sees(poses[s2], 1)
        else:
            jo = EMPTY * 5 + EMPTY
        o[:, s2, jo] = 1.0
    b0 = np.zeros(n_states)
    b0[start] = 1.0
    return DecPomdp(t, o, r, discount, b0, (4, 4), (5, 5), labels,
                    [actions, actions], [obs_names, obs_names], name="box-pushing")


def correlation_example(R=10.0, discount=0.9):
    """Two states, two agents with actions A and B and a single observation.

    In s1 the joint action AA earns +R and moves to s2; in s2 BB earns +R and
    moves back to s1. Every other joint action costs R and stays put.
    """
    R = float(R)
    if not R > 0:
        raise DecPomdpError(f"correlation-example needs R > 0, got {R}")
    t = np.zeros((2, 4, 2))
    r = np.full((2, 4), -R)
    AA, BB = 0, 3
    for s in range(2):
        t[s, :, s] = 1.0
    t[0, AA] = [0.0, 1.0]
    r[0, AA] = R
    t[1, BB] = [1.0, 0.0]
    r[1, BB] = R
    o = np.ones((4, 2, 1))
    return DecPomdp(t, o, r, discount, [1.0, 0.0], (2, 2), (1, 1), ["s1", "s2"],
                    [["A", "B"], ["A", "B"]], [["none"], ["none"]],
                    name="correlation-example")


def correlation_example_controllers(model):
    """The three reference joint policies for the two-state coordination problem.

    ``"correlated"``: one node per agent, a two-node device that jumps
    uniformly, agents play A on device node 0 and B on node 1.
    ``"alternating"``: two nodes per agent cycling A, B, A, ... in lockstep.
    ``"uniform"``: one node per agent mixing A and B evenly, no device.
    """
    from .controller import CorrelationDevice, JointController, LocalController

    one_obs = np.ones((1, 1, 2, 1, 1))
    signal = np.array([[[1.0, 0.0]], [[0.0, 1.0]]])  # (c, q, a)
    correlated = JointController(
        [LocalController(signal, np.ones((2, 1, 2, 1, 1))) for _ in range(2)],
        CorrelationDevice(np.full((2, 2), 0.5)))
    psi = np.array([[[1.0, 0.0], [0.0, 1.0]]])
    eta = np.zeros((1, 2, 2, 1, 2))
    eta[0, 0, :, 0, 1] = 1.0
    eta[0, 1, :, 0, 0] = 1.0
    alternating = JointController([LocalController(psi, eta) for _ in range(2)])
    uniform = JointController(
        [LocalController(np.full((1, 1, 2), 0.5), one_obs) for _ in range(2)])
    return {"correlated": correlated, "alternating": alternating, "uniform": uniform}
