"""Command-line interface.

Subcommands: run (execute an experiment config), sweep (alias of run),
bounds (evaluate the convergence bounds for given constants), verify (run a
named verification suite), divergence (one-off divergence report).

Exit codes: 0 success, 1 verification failure, 2 config or input error.
"""

from __future__ import annotations

import argparse
import json
import sys

try:
    import tomllib
except ModuleNotFoundError:  # Python 3.10
    import tomli as tomllib

from . import harness
from .errors import HsgdError


def _add_run_options(p: argparse.ArgumentParser) -> None:
    p.add_argument("--spec", required=True, help="experiment TOML file")
    p.add_argument("--out", default=None, help="output directory (default: from spec)")
    p.add_argument("--seed", type=int, default=None,
                   help="replace the config's seed list with this single seed")
    p.add_argument("--threads", type=int, default=1,
                   help="run instances in parallel threads")
    p.add_argument("--lr-policy", choices=("enforce", "warn"), default=None,
                   help="override the config's learning-rate policy")


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="hsgd",
        description="Hierarchical-SGD simulation and bound-verification toolkit",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    for name, doc in (("run", "execute an experiment config"),
                      ("sweep", "alias of run for sweep-style configs")):
        _add_run_options(sub.add_parser(name, help=doc))

    p_bounds = sub.add_parser("bounds", help="evaluate convergence bounds")
    p_bounds.add_argument("--inputs", help="TOML file with the bound constants")
    p_bounds.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                          help="add or override one scalar input")

    p_verify = sub.add_parser("verify", help="run a verification suite")
    p_verify.add_argument("suite", choices=harness.VERIFY_SUITES)
    p_verify.add_argument("--out", default=None, help="also write the report here")
    p_verify.add_argument("--corrupt", default=None,
                          help="test-only hook: corrupt a named constant")

    p_div = sub.add_parser("divergence", help="divergence report for a fixture")
    p_div.add_argument("--fixture", required=True)
    p_div.add_argument("--num-groups", type=int, required=True)
    p_div.add_argument("--grouping", default="contiguous",
                       choices=("contiguous", "round-robin", "random"))
    p_div.add_argument("--seed", type=int, default=0)
    p_div.add_argument("--probes", type=int, default=5)

    args = parser.parse_args(argv)
    try:
        return _dispatch(args)
    except HsgdError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


def _dispatch(args) -> int:
    if args.command in ("run", "sweep"):
        spec = harness.load_experiment(args.spec)
        if args.seed is not None:
            spec.seeds = [args.seed]
        if args.lr_policy is not None:
            spec.lr_policy = args.lr_policy
        out_dir = args.out if args.out is not None else spec.out
        summary = harness.run_experiment(spec, out_dir, threads=args.threads)
        print(json.dumps(
            {"experiment": summary["experiment"], "runs": len(summary["runs"]),
             "out": out_dir,
             "verification_passed": summary.get("verification_passed")},
        ))
        return 0 if summary.get("verification_passed", True) else 1

    if args.command == "bounds":
        table: dict = {}
        if args.inputs:
            with open(args.inputs, "rb") as fh:
                table.update(tomllib.load(fh))
        for item in args.set:
            key, _, raw = item.partition("=")
            if not raw:
                raise HsgdError(f"--set expects KEY=VALUE, got {item!r}")
            table[key] = json.loads(raw)
        report = harness.bounds_report(table)
        print(json.dumps(report, indent=2, sort_keys=True))
        return 0

    if args.command == "verify":
        report = harness.verify_suite(args.suite, corrupt=args.corrupt)
        text = report.to_json()
        print(text)
        if args.out:
            with open(args.out, "w") as fh:
                fh.write(text + "\n")
        return 0 if report.passed else 1

    if args.command == "divergence":
        report = harness.divergence_report(
            args.fixture, args.num_groups, args.grouping, args.seed, args.probes
        )
        print(report.to_json())
        return 0

    raise AssertionError(f"unhandled command {args.command}")


if __name__ == "__main__":
    sys.exit(main())
