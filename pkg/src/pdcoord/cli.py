"""
Command-line interface.

Exit codes: 0 on success, 2 for configuration errors (including rejected
step sizes), 3 when iterates diverge, 1 when the audit finds a failure.
"""

import argparse
import sys

from .avgop import DivergenceError
from .dataio import LibsvmError, make_synthetic, write_libsvm
from .experiment import ALGORITHMS, ConfigError, describe_params, grid_search, load_benchmark, load_config, run_experiment
from .graph import parse_graph_spec, write_edge_list
from .primal_dual import StepSizeError

EXIT_OK, EXIT_AUDIT, EXIT_CONFIG, EXIT_DIVERGED = 0, 1, 2, 3

_CONFIG_FLAGS = [
    ("--algorithm", dict(choices=ALGORITHMS)),
    ("--data", dict(help="synthetic:MxP or a LIBSVM file")),
    ("--graph", dict(help="ring:N, torus:RxC, complete:N, path:N, star:N, er:N:p or file:PATH")),
    ("--agents", dict(type=int, help="expected number of agents (checked against the graph)")),
    ("--mu", dict(type=float, help="l2 weight (default 1e-4)")),
    ("--steps", dict(help="auto (grid search), theory, tau=..,rho=.. or gamma=..")),
    ("--budget", dict(help="local gradient budget")),
    ("--seed", dict(type=int)),
    ("--out", dict(help="trace file (.csv or .json)")),
    ("--format", dict(choices=("csv", "json"))),
    ("--record-every", dict(type=int, help="record every this many local gradients")),
    ("--partition", dict(choices=("balanced", "contiguous"))),
    ("--evaluate-at", dict(choices=("agent", "average"))),
]


def _add_config_args(p):
    p.add_argument("--config", help="key=value configuration file")
    for flag, kw in _CONFIG_FLAGS:
        p.add_argument(flag, default=None, **kw)
    p.add_argument("--no-standardize", dest="standardize", action="store_const", const=False, default=None)
    p.add_argument("--timing", action="store_const", const=True, default=None,
                   help="fill the seconds column with wall-clock time")


def _config_from_args(args):
    keys = [f.lstrip("-").replace("-", "_") for f, _ in _CONFIG_FLAGS] + ["standardize", "timing"]
    overrides = {k: getattr(args, k) for k in keys}
    return load_config(args.config, overrides)


def cmd_run(args):
    config = _config_from_args(args)
    run_experiment(config, stream=sys.stdout)
    return EXIT_OK


def cmd_grid(args):
    config = _config_from_args(args)
    bench = load_benchmark(config)
    result = grid_search(config.algorithm, bench, config.seed)
    print(f"{'i':>3}  {'parameters':<40} objective after 50 rounds")
    for i, desc, score in result.table():
        mark = "*" if desc == describe_params(result.chosen) else " "
        print(f"{i:>3}{mark} {desc:<40} {score:.12g}")
    print(f"chosen: {describe_params(result.chosen)}")
    return EXIT_OK


def cmd_gen_graph(args):
    try:
        graph = parse_graph_spec(args.spec, seed=args.seed)
    except (ValueError, OSError) as exc:
        raise ConfigError(str(exc)) from None
    if args.out:
        with open(args.out, "w") as fh:
            write_edge_list(graph, fh)
    else:
        write_edge_list(graph, sys.stdout)
    return EXIT_OK


def cmd_gen_data(args):
    if args.m < 1 or args.p < 1:
        raise ConfigError("m and p must be positive")
    ds = make_synthetic(args.m, args.p, seed=args.seed, noise=args.noise, flip=args.flip)
    write_libsvm(ds, args.out)
    return EXIT_OK


def cmd_check(args):
    from .audit import run_audit

    results = run_audit(seed=args.seed, cases=args.cases)
    for name, ok, detail in results:
        print(f"{'PASS' if ok else 'FAIL'}  {name:<26} {detail}")
    return EXIT_OK if all(ok for _, ok, _ in results) else EXIT_AUDIT


def build_parser():
    parser = argparse.ArgumentParser(prog="pdcoord", description="Primal-dual coordinate methods benchmark")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="grid-search steps (unless given) and run one algorithm")
    _add_config_args(p)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("grid", help="print the step-size grid scores")
    _add_config_args(p)
    p.set_defaults(func=cmd_grid)

    p = sub.add_parser("gen-graph", help="write a graph as an edge list")
    p.add_argument("spec")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")
    p.set_defaults(func=cmd_gen_graph)

    p = sub.add_parser("gen-data", help="write a synthetic logistic dataset in LIBSVM format")
    p.add_argument("--m", type=int, default=2000)
    p.add_argument("--p", type=int, default=50)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--noise", type=float, default=0.5)
    p.add_argument("--flip", type=float, default=0.05)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("check", help="run the numerical self-audit")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--cases", type=int, default=20)
    p.set_defaults(func=cmd_check)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, StepSizeError, LibsvmError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DivergenceError as exc:
        print(f"diverged: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
