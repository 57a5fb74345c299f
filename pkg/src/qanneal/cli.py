"""``anneal`` command line: run experiments, list them, verify property suites, fit slopes."""
from __future__ import annotations

import argparse
import dataclasses
import json
import sys

from . import __version__
from .bounds import _jsonable
from .harness import config, experiments
from .harness.fitting import InsufficientPointsError, fit_csv, parse_window


def _cmd_run(args) -> int:
    try:
        spec = config.load(args.spec)
        if args.output:
            spec = dataclasses.replace(spec, output=args.output)
        res = experiments.run(spec)
    except (config.SpecError, ValueError, FileNotFoundError) as exc:
        print(f"anneal: error: {exc}", file=sys.stderr)
        return 2
    print(json.dumps(_jsonable(res.summary), indent=2, sort_keys=True, default=str))
    for f in res.files:
        print(f"wrote {f}", file=sys.stderr)
    return 0


def _cmd_list(args) -> int:
    for name in experiments.EXPERIMENTS:
        print(f"{name:20s} {experiments.DESCRIPTIONS[name]}")
    return 0


def _cmd_verify(args) -> int:
    report = experiments.SUITES[args.suite](seed=args.seed)
    print(json.dumps(_jsonable(report), indent=2, sort_keys=True))
    return 0 if report["passed"] else 1


def _cmd_fit(args) -> int:
    try:
        fits = fit_csv(args.csv, parse_window(args.window) if args.window else None,
                       x_col=args.x, y_col=args.y)
    except (InsufficientPointsError, ValueError, KeyError, FileNotFoundError) as exc:
        print(f"anneal: error: {exc}", file=sys.stderr)
        return 2
    for key, f in fits.items():
        print(f"{key}\tslope={f.slope:.4f}\tstderr={f.stderr:.4f}\tn={f.n_points}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="anneal", description=__doc__)
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run an experiment from a spec file")
    r.add_argument("spec")
    r.add_argument("--output", help="override the output directory")
    r.set_defaults(func=_cmd_run)

    sub.add_parser("list-experiments", help="list registered experiments").set_defaults(func=_cmd_list)

    v = sub.add_parser("verify", help="run a property suite")
    v.add_argument("suite", choices=sorted(experiments.SUITES))
    v.add_argument("--seed", type=int, default=0)
    v.set_defaults(func=_cmd_verify)

    f = sub.add_parser("fit", help="fit log-log slopes of a sweep CSV")
    f.add_argument("csv")
    f.add_argument("--window", help="metric window lo:hi, e.g. 1e-10:1e-2")
    f.add_argument("--x", default="tau")
    f.add_argument("--y", default=None, help="metric column (default E_res, else P_ex_1)")
    f.set_defaults(func=_cmd_fit)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
