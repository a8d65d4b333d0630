"""``scenesdr`` command line: run, compare, ablate, resume, report, budget."""
from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace

from .checkpoint import CheckpointError
from .harness import (ABLATIONS, METHODS, ConfigError, ExperimentConfig, ablate, budget_lines, collect, compare,
                      load_config, resume, run_experiment)


def _u64(text: str) -> int:
    v = int(text, 0)
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return v


def _positive(text: str) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return v


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="scenesdr", description="Attribute search for a line-based scene simulator.")
    p.add_argument("-v", "--verbose", action="store_true", help="log every finished run")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, method=True):
        sp.add_argument("--config", metavar="PATH", help="INI experiment config (defaults apply when omitted)")
        sp.add_argument("--seed", type=_u64, metavar="U64", help="master seed")
        sp.add_argument("--reps", type=_positive, metavar="N", help="repetitions")
        sp.add_argument("--out", metavar="DIR", help="output directory")
        sp.add_argument("--equal-budget", action="store_true", help="give budgeted baselines the SDR budget")
        if method:
            sp.add_argument("--method", action="append", choices=METHODS, metavar="NAME",
                            help=f"one of {', '.join(METHODS)}")

    common(sub.add_parser("run", help="run one method for every repetition seed"))
    common(sub.add_parser("compare", help="run several methods on shared seeds (repeat --method)"))
    ab = sub.add_parser("ablate", help="SDR against SDR with components removed")
    common(ab, method=False)
    ab.add_argument("--flag", action="append", choices=ABLATIONS, metavar="FLAG",
                    help=f"one of {', '.join(ABLATIONS)}; repeatable")
    rs = sub.add_parser("resume", help="continue an interrupted run from its checkpoint")
    rs.add_argument("checkpoint", metavar="PATH")
    rp = sub.add_parser("report", help="summarize finished runs in an output directory")
    rp.add_argument("out", metavar="DIR")
    bd = sub.add_parser("budget", help="theoretical evaluation counts and search-space sizes")
    common(bd, method=False)
    bd.add_argument("--sx", type=int, help="horizontal positions per object / line")
    bd.add_argument("--sy", type=int, help="vertical positions per object")
    bd.add_argument("--density", type=int, help="density levels per class")
    bd.add_argument("--classes", type=int, help="object classes")
    bd.add_argument("--objects", help="comma separated objects per class")
    return p


def _config(args) -> ExperimentConfig:
    cfg = load_config(args.config) if args.config else ExperimentConfig()
    over = {}
    if args.seed is not None:
        over["seed"] = args.seed
    if args.reps is not None:
        over["reps"] = args.reps
    if args.out is not None:
        over["output"] = args.out
    if args.equal_budget:
        over["equal_budget"] = True
    methods = getattr(args, "method", None)
    if methods:
        if args.command == "run":
            if len(methods) > 1:
                raise ConfigError("run takes a single --method; use compare for several")
            over["method"] = methods[0]
        else:
            over["methods"] = tuple(methods)
    return replace(cfg, **over)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        if args.command == "resume":
            res = resume(args.checkpoint)
            if res is None:
                print(f"{args.checkpoint}: run already completed, nothing to do")
                return 0
            print(f"{res.label} rep {res.rep}: {res.status}, {res.evaluations} evaluations")
            return 0 if res.status == "completed" else 1
        if args.command == "report":
            report = collect(args.out)
            report.write(args.out)
            print(report.table(), end="")
            return 1 if report.failed else 0
        cfg = _config(args)
        if args.command == "budget":
            objects = [int(n) for n in args.objects.split(",")] if args.objects else None
            print("\n".join(budget_lines(cfg, s_x=args.sx, s_y=args.sy, density_range=args.density,
                                         n_classes=args.classes, objects_per_class=objects)))
            return 0
        if args.command == "run":
            report = run_experiment(cfg)
        elif args.command == "compare":
            report = compare(cfg)
        else:
            report = ablate(cfg, args.flag if args.flag else None)
        print(report.table(), end="")
        return 1 if report.failed else 0
    except (ConfigError, CheckpointError, FileNotFoundError) as exc:
        print(f"scenesdr: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
