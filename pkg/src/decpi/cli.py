"""Command-line front end: ``decpi solve|eval|simulate|verify|export``.

Exit codes: 0 on success or a clean early stop, 1 on internal errors or
failed verification, 2 on bad usage or unreadable input.
"""

import argparse
import json
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .controller import evaluate, make_initial, value_at_belief
from .controller_io import deserialize_controller, export_dot, serialize_controller
from .domains import DOMAINS, builtin_domain, correlation_example_controllers
from .dpomdp import parse_dpomdp, serialize_dpomdp
from .exceptions import CapacityError, DecPomdpError
from .heuristic import default_fixed_policies, heuristic_policy_iteration, make_point_set
from .lp import set_lp_dump
from .model import FixedAgentPolicy
from .oracle import best_tree_value, memoryless_independent_search, monte_carlo_value
from .solver import DEFAULT_MAX_NODES, DEFAULT_MAX_SECONDS, exhaustive_backup, policy_iteration
from .transform import bounded_pi_run

OUTPUT_ENV = "DECPI_OUTPUT_DIR"
DEFAULT_OUTPUT = "decpi-out"
# tail value dropped by the simulator's automatic horizon
MC_TRUNCATION = 1e-3


class UsageError(Exception):
    pass


# -- argument parsing -------------------------------------------------------

def _add_problem(p):
    g = p.add_mutually_exclusive_group(required=True)
    g.add_argument("--domain", choices=DOMAINS, help="built-in benchmark problem")
    g.add_argument("--file", help="problem file in the text problem format")
    p.add_argument("--R", type=float, default=None,
                   help="reward magnitude (correlation-example only)")
    p.add_argument("--discount", type=float, default=None, help="override the discount")


def _add_controller(p):
    p.add_argument("--controller", help="controller file; default is the single-node "
                   "controller from --initial-actions")
    p.add_argument("--initial-actions", type=int, nargs="+", default=None,
                   help="starting action of each agent (default: action 0)")


def build_parser():
    parser = argparse.ArgumentParser(prog="decpi", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"decpi {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve", help="improve a controller and write logs")
    _add_problem(p)
    p.add_argument("--algo", choices=["pi", "pi-bounded", "bounded-only", "hpi"], default="pi")
    p.add_argument("--epsilon", type=float, default=0.1)
    p.add_argument("--max-iters", type=int, default=None)
    p.add_argument("--max-nodes", type=int, default=DEFAULT_MAX_NODES)
    p.add_argument("--max-seconds", type=float, default=DEFAULT_MAX_SECONDS)
    p.add_argument("--vpt-slack", type=float, default=None, help="pi/pi-bounded only")
    p.add_argument("--sizes", type=int, nargs="+", default=None, help="bounded-only")
    p.add_argument("--device", type=int, default=None, help="bounded-only device size")
    p.add_argument("--steps", type=int, default=None, help="bounded-only")
    p.add_argument("--restarts", type=int, default=None, help="bounded-only")
    p.add_argument("--k", type=int, default=None, help="hpi belief points per agent")
    p.add_argument("--policy", default=None,
                   help="hpi teammate policy: 'default', 'uniform' or comma-separated "
                        "action probabilities used for every agent")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--initial-actions", type=int, nargs="+", default=None)
    p.add_argument("--out", default=None, help=f"output directory (env {OUTPUT_ENV})")
    p.add_argument("--timings", action="store_true",
                   help="fill the seconds column of log.csv (makes it run-dependent)")
    p.add_argument("--dump-lp", default=None, metavar="DIR",
                   help="write every LP in CPLEX LP format to DIR")

    p = sub.add_parser("eval", help="evaluate a controller exactly")
    _add_problem(p)
    _add_controller(p)
    p.add_argument("--table", action="store_true", help="print the full V(s, q) table")

    p = sub.add_parser("simulate", help="Monte-Carlo estimate of a controller's value")
    _add_problem(p)
    _add_controller(p)
    p.add_argument("--episodes", type=int, default=10_000)
    p.add_argument("--horizon", type=int, default=None)
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("verify", help="run the oracle cross-checks")
    _add_problem(p)
    p.add_argument("--depth", type=int, default=2, help="tree oracle depth (1 or 2)")
    p.add_argument("--episodes", type=int, default=20_000)
    p.add_argument("--resolution", type=float, default=0.01)
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("export", help="write a problem file, controller file or DOT graph")
    _add_problem(p)
    _add_controller(p)
    p.add_argument("--format", choices=["dpomdp", "controller", "dot"], required=True)
    p.add_argument("--output", "-o", default="-", help="output file ('-' for stdout)")
    return parser


# -- shared helpers -----------------------------------------------------------

def _load_model(args):
    if args.file is not None:
        if args.R is not None:
            raise UsageError("--R applies to --domain correlation-example only")
        path = Path(args.file)
        if not path.is_file():
            raise UsageError(f"problem file not found: {args.file}")
        model = parse_dpomdp(path.read_text())
        if args.discount is not None:
            raise UsageError("--discount cannot override a problem file")
        return model
    params = {}
    if args.R is not None:
        if args.domain != "correlation-example":
            raise UsageError("--R applies to --domain correlation-example only")
        params["R"] = args.R
    if args.discount is not None:
        params["discount"] = args.discount
    return builtin_domain(args.domain, **params)


def _load_controller(args, model):
    if getattr(args, "controller", None):
        if args.initial_actions is not None:
            raise UsageError("give either --controller or --initial-actions")
        path = Path(args.controller)
        if not path.is_file():
            raise UsageError(f"controller file not found: {args.controller}")
        jc = deserialize_controller(path.read_text())
        jc.check_model(model)
        return jc
    return make_initial(model, _initial_actions(args, model))


def _initial_actions(args, model):
    acts = args.initial_actions
    if acts is None:
        return [0] * model.n_agents
    if len(acts) != model.n_agents:
        raise UsageError(f"--initial-actions needs {model.n_agents} values")
    return acts


def _config_echo(args):
    skip = {"func"}
    return {k: v for k, v in sorted(vars(args).items()) if k not in skip}


def _provenance(args):
    return [f"decpi {__version__}",
            "config: " + json.dumps(_config_echo(args), sort_keys=True),
            f"seed: {getattr(args, 'seed', None)}"]


def _write(path, text):
    Path(path).write_text(text)


# -- solve ---------------------------------------------------------------------

_ALGO_FLAGS = {
    "vpt_slack": {"pi", "pi-bounded"},
    "sizes": {"bounded-only"},
    "device": {"bounded-only"},
    "steps": {"bounded-only"},
    "restarts": {"bounded-only"},
    "k": {"hpi"},
    "policy": {"hpi"},
}


def _check_solve_args(args, model):
    for flag, algos in _ALGO_FLAGS.items():
        if getattr(args, flag) is not None and args.algo not in algos:
            raise UsageError(f"--{flag.replace('_', '-')} is not used by --algo {args.algo}")
    if args.epsilon <= 0:
        raise UsageError("--epsilon must be positive")
    if args.max_nodes < 1 or args.max_seconds <= 0:
        raise UsageError("caps must be positive")
    if args.max_iters is not None and args.max_iters < 0:
        raise UsageError("--max-iters must be non-negative")
    if args.vpt_slack is not None and args.vpt_slack < 0:
        raise UsageError("--vpt-slack must be non-negative")
    if args.algo == "bounded-only":
        if args.sizes is None:
            raise UsageError("--algo bounded-only needs --sizes")
        if len(args.sizes) not in (1, model.n_agents) or min(args.sizes) < 1:
            raise UsageError("--sizes takes one positive size or one per agent")
        if (args.device or 1) < 1 or (args.steps or 0) < 0 or (args.restarts or 1) < 1:
            raise UsageError("--device, --steps and --restarts must be positive")
    if args.algo == "hpi" and args.k is not None and args.k < 1:
        raise UsageError("--k must be positive")
    _initial_actions(args, model)


def _teammate_policies(args, model):
    spec = args.policy or "default"
    if spec == "default":
        return default_fixed_policies(model)
    if spec == "uniform":
        return [FixedAgentPolicy.uniform(model, i) for i in range(model.n_agents)]
    try:
        probs = np.array([float(x) for x in spec.split(",")])
    except ValueError:
        raise UsageError(f"bad --policy {spec!r}") from None
    if any(len(probs) != n for n in model.n_actions):
        raise UsageError("--policy needs one probability per action")
    return [FixedAgentPolicy.from_agent_policies(model, i, [probs] * model.n_agents)
            for i in range(model.n_agents)]


def cmd_solve(args):
    model = _load_model(args)
    _check_solve_args(args, model)
    out = Path(args.out or os.environ.get(OUTPUT_ENV) or DEFAULT_OUTPUT)
    out.mkdir(parents=True, exist_ok=True)
    if args.dump_lp:
        set_lp_dump(args.dump_lp)
    header = _provenance(args)
    try:
        if args.algo == "bounded-only":
            summary = _solve_bounded(args, model, out, header)
        else:
            summary = _solve_iterative(args, model, out, header)
    finally:
        set_lp_dump(None)
    lines = [f"# {h}" for h in header] + [f"{k}: {v}" for k, v in summary.items()]
    _write(out / "summary.txt", "\n".join(lines) + "\n")
    print("\n".join(f"{k}: {v}" for k, v in summary.items()))
    return 0


def _solve_iterative(args, model, out, header):
    ckpt = out / "checkpoints"
    ckpt.mkdir(exist_ok=True)
    jc0 = make_initial(model, _initial_actions(args, model))

    def checkpoint(t, jc, log):
        _write(ckpt / f"iter_{t:03d}.ctl", serialize_controller(jc, header + [f"iteration: {t}"]))

    try:
        if args.algo == "hpi":
            points = make_point_set(model, args.k or 10, _teammate_policies(args, model),
                                    seed=args.seed)
            _write(out / "points.txt", "".join(f"# {h}\n" for h in header) + points.to_text())
            jc, log = heuristic_policy_iteration(
                model, jc0=jc0, points=points, max_nodes=args.max_nodes,
                max_seconds=args.max_seconds, max_iter=args.max_iters, callback=checkpoint)
        else:
            jc, log = policy_iteration(
                model, jc0, args.epsilon, bounded_updates=args.algo == "pi-bounded",
                vpt_slack=args.vpt_slack or 0.0, max_nodes=args.max_nodes,
                max_seconds=args.max_seconds, max_iter=args.max_iters, callback=checkpoint)
        termination = log.termination
    except CapacityError as exc:
        jc, log = exc.partial
        termination = exc.reason
        print(f"stopped early ({exc.reason}): {exc}", file=sys.stderr)
    _write(out / "log.csv", log.to_csv(header_lines=header, timings=args.timings))
    _write(out / "timings.csv", "t,seconds\n" + "".join(
        f"{r.t},{r.seconds:.3f}\n" for r in log.records))
    _write(out / "controller.ctl", serialize_controller(jc, header))
    value, node = value_at_belief(evaluate(model, jc), model.initial_belief)
    return {"algorithm": args.algo, "termination": termination,
            "iterations": log.records[-1].t, "value_b0": f"{value:.6f}",
            "start_node": " ".join(map(str, node)),
            "sizes": " ".join(map(str, jc.sizes)), "device_size": jc.device_size}


def _solve_bounded(args, model, out, header):
    sizes = tuple(args.sizes) * (model.n_agents if len(args.sizes) == 1 else 1)
    device = args.device or 1
    steps = 200 if args.steps is None else args.steps
    restarts = args.restarts or 20
    seeds = np.random.SeedSequence(args.seed).spawn(restarts)
    start = time.perf_counter()
    rows, best = [], None
    for r, ss in enumerate(seeds):
        jc, trace = bounded_pi_run(model, sizes, device, steps, seed=np.random.default_rng(ss))
        rows.append(f"{r},{trace[0]:.10f},{trace[-1]:.10f}")
        if best is None or trace[-1] > best[2][-1]:
            best = (r, jc, trace)
        if time.perf_counter() - start > args.max_seconds:
            print("stopped early (wall-clock)", file=sys.stderr)
            break
    pre = "".join(f"# {h}\n" for h in header)
    _write(out / "runs.csv", pre + "run,initial_value,final_value\n" + "\n".join(rows) + "\n")
    _write(out / "best_trace.csv", pre + "step,value_b0\n" + "".join(
        f"{k},{v:.10f}\n" for k, v in enumerate(best[2])))
    _write(out / "controller.ctl", serialize_controller(best[1], header))
    return {"algorithm": "bounded-only", "termination": "steps",
            "runs": len(rows), "best_run": best[0], "value_b0": f"{best[2][-1]:.6f}",
            "sizes": " ".join(map(str, sizes)), "device_size": device}


# -- eval / simulate ---------------------------------------------------------------

def cmd_eval(args):
    model = _load_model(args)
    jc = _load_controller(args, model)
    vt = evaluate(model, jc)
    value, node = value_at_belief(vt, model.initial_belief)
    if args.table:
        for idx in np.ndindex(vt.values.shape[1:]):
            row = " ".join(f"{v:.6f}" for v in vt.values[(slice(None),) + idx])
            print(f"V(s, {' '.join(map(str, idx))}): {row}")
    print(f"V(b0): {value:.6f}")
    print(f"start node: {' '.join(map(str, node))}")
    print(f"residual: {vt.residual:.3e}")
    return 0


def cmd_simulate(args):
    model = _load_model(args)
    jc = _load_controller(args, model)
    if args.episodes < 2:
        raise UsageError("--episodes must be at least 2")
    vt = evaluate(model, jc)
    value, node = value_at_belief(vt, model.initial_belief)
    mean, se = monte_carlo_value(model, jc, model.initial_belief, node, args.episodes,
                                 args.horizon, seed=args.seed)
    print(f"seed: {args.seed}")
    print(f"simulated: {mean:.6f} +/- {se:.6f}")
    print(f"exact: {value:.6f}")
    print(f"z: {(mean - value) / se if se > 0 else 0.0:.3f}")
    return 0


# -- verify ---------------------------------------------------------------------

def cmd_verify(args):
    model = _load_model(args)
    if args.depth not in (0, 1, 2):
        raise UsageError("--depth must be 0, 1 or 2")
    checks = []
    if args.domain == "correlation-example":
        checks += _verify_correlation(model, args)
    else:
        checks += _verify_trees(model, args)
    checks += _verify_monte_carlo(model, args)
    ok = all(passed for _, passed in checks)
    for line, passed in checks:
        print(f"[{'PASS' if passed else 'FAIL'}] {line}")
    return 0 if ok else 1


def _verify_correlation(model, args):
    best, _ = memoryless_independent_search(model, args.resolution)
    ctl = correlation_example_controllers(model)
    corr = evaluate(model, ctl["correlated"]).values[:, :, 0, 0]
    # device started from its stationary (uniform) distribution
    corr_v = corr.mean(axis=1)
    alt = evaluate(model, ctl["alternating"]).values[0, 0, 0, 0]
    r, beta = float(np.max(np.abs(model.reward))), model.discount
    return [
        (f"independent-best worst-state value {best:.4f} (bound {-r / (2 * (1 - beta)):.4f})",
         best <= -r / (2 * (1 - beta)) + 0.5),
        (f"correlated one-node value per state {corr_v[0]:.6f} {corr_v[1]:.6f}",
         bool(np.all(np.abs(corr_v) <= 1e-8))),
        (f"alternating two-node value from s1 {alt:.6f}", abs(alt - r / (1 - beta)) <= 1e-8),
    ]


def _verify_trees(model, args):
    jc = make_initial(model, [0] * model.n_agents)
    rng = np.random.default_rng(args.seed)
    beliefs = [model.initial_belief] + [rng.dirichlet(np.ones(model.n_states))
                                        for _ in range(4)]
    checks = []
    backed = jc
    for t in range(1, args.depth + 1):
        backed = exhaustive_backup(model, backed)
        vt = evaluate(model, backed)
        try:
            gaps = [abs(best_tree_value(model, jc, t, b) - value_at_belief(vt, b)[0])
                    for b in beliefs]
        except CapacityError as exc:
            checks.append((f"tree oracle depth {t}: skipped ({exc})", True))
            break
        checks.append((f"tree oracle depth {t}: max gap {max(gaps):.2e} over "
                       f"{len(beliefs)} beliefs", max(gaps) <= 1e-8))
    return checks


def _verify_monte_carlo(model, args):
    jc = make_initial(model, [0] * model.n_agents)
    vt = evaluate(model, jc)
    value, node = value_at_belief(vt, model.initial_belief)
    mean, se = monte_carlo_value(model, jc, model.initial_belief, node, args.episodes,
                                 seed=args.seed)
    return [(f"monte carlo {mean:.4f} +/- {se:.4f} vs exact {value:.4f}",
             abs(mean - value) <= 3 * se + MC_TRUNCATION)]


# -- export -----------------------------------------------------------------------

def cmd_export(args):
    model = _load_model(args)
    header = [f"decpi {__version__}",
              "config: " + json.dumps(_config_echo(args), sort_keys=True)]
    if args.format == "dpomdp":
        if args.controller or args.initial_actions:
            raise UsageError("--format dpomdp takes no controller")
        text = serialize_dpomdp(model, header)
    else:
        jc = _load_controller(args, model)
        text = (serialize_controller(jc, header) if args.format == "controller"
                else export_dot(jc, model, header))
    if args.output == "-":
        sys.stdout.write(text)
    else:
        _write(args.output, text)
    return 0


COMMANDS = {"solve": cmd_solve, "eval": cmd_eval, "simulate": cmd_simulate,
            "verify": cmd_verify, "export": cmd_export}


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except (UsageError, DecPomdpError, OSError) as exc:
        print(f"decpi {args.command}: error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 - last-resort exit code
        print(f"decpi {args.command}: internal error: {exc!r}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
