"""Command line entry point: ``logtrunc {simulate, fit-csv, bounds, selftest}``.

Exit codes: 0 ok, 2 configuration error, 3 report flagged for divergence.
"""
from __future__ import annotations

import argparse
import csv
import logging
import sys
from typing import List, Optional, Sequence

import numpy as np

from .bounds import BoundInputs, excess_bound_thm1, excess_bound_thm2
from .experiment import (ConfigError, ExperimentConfig, emit_report, load_config, report_to_csv,
                         report_to_json, run_experiment)
from .losses import knight_identity_check
from .solver import AlphaInputs, default_alpha
from .truncation import KINDS, HighOrderFn, verify_sandwich

EXIT_OK, EXIT_CONFIG, EXIT_FLAGGED = 0, 2, 3


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="INI file with [experiment], [noise], [sgd], [search] sections")
    p.add_argument("--set", action="append", default=[], metavar="SECTION.KEY=VALUE",
                   help="override one config value (repeatable)")
    p.add_argument("--jobs", type=int, default=None, help="parallel replications")
    p.add_argument("--output", default=None, help="report path (default: stdout)")
    p.add_argument("--format", choices=("csv", "json"), default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--reps", type=int, default=None)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="logtrunc", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="truncated vs untruncated runs on synthetic data")
    _common(sim)
    sim.add_argument("--task", default=None)

    fit = sub.add_parser("fit-csv", help="truncated vs untruncated fits on a numeric CSV file")
    _common(fit)
    fit.add_argument("csv_path")
    fit.add_argument("--target", required=True, help="name of the response column")
    fit.add_argument("--tau", type=float, default=None, help="quantile level (0.5 = LAD)")

    bnd = sub.add_parser("bounds", help="tabulate the power-law excess bound over n")
    bnd.add_argument("--n", type=int, nargs="+", default=[200, 1000, 10000, 100000])
    bnd.add_argument("--p", type=int, default=100)
    bnd.add_argument("--eps", type=float, nargs="+", default=[0.5, 1.0])
    bnd.add_argument("--delta", type=float, default=0.05)
    bnd.add_argument("--r", type=float, default=10.0)
    bnd.add_argument("--sup-risk", type=float, default=1.0)
    bnd.add_argument("--EH", type=float, default=1.0)
    bnd.add_argument("--EH-pow", type=float, default=1.0)
    bnd.add_argument("--output", default=None)

    sub.add_parser("selftest", help="fast numerical sanity checks")
    return parser


def _config_from(args) -> ExperimentConfig:
    overrides: List[str] = []
    for attr, key in (("task", "experiment.task"), ("seed", "experiment.seed"),
                      ("reps", "experiment.reps"), ("jobs", "experiment.jobs"),
                      ("format", "output.format"), ("output", "output.path")):
        val = getattr(args, attr, None)
        if val is not None:
            overrides.append(f"{key}={val}")
    if getattr(args, "csv_path", None):
        # the path has to be in place before the task switch is validated
        overrides = [f"data.csv={args.csv_path}", f"data.target={args.target}",
                     "experiment.task=csv"] + overrides
        if args.tau is not None:
            overrides.append(f"experiment.tau={args.tau}")
    # explicit --set wins over the convenience flags
    return load_config(args.config, overrides + list(args.set))


def _run(args) -> int:
    cfg = _config_from(args)
    report = run_experiment(cfg)
    if cfg.output:
        emit_report(report, cfg.output, cfg.fmt)
    else:
        sys.stdout.write(report_to_csv(report) if cfg.fmt == "csv" else report_to_json(report) + "\n")
    return EXIT_OK if report.valid else EXIT_FLAGGED


def _bounds(args) -> int:
    out = open(args.output, "w", newline="") if args.output else sys.stdout
    try:
        w = csv.writer(out, lineterminator="\n")
        w.writerow(["n", "p", "one_plus_eps", "alpha", "excess_bound"])
        for eps in args.eps:
            for n in args.n:
                inp = BoundInputs(n=n, p=args.p, epsilon=eps, delta=args.delta, r=args.r,
                                  sup_risk=args.sup_risk, EH=args.EH, EH_pow=args.EH_pow)
                a = default_alpha(AlphaInputs(n=n, p=args.p, epsilon=eps, delta=args.delta,
                                              r=args.r, sup_risk=args.sup_risk))
                w.writerow([n, args.p, 1.0 + eps, repr(a), repr(excess_bound_thm2(inp))])
    finally:
        if out is not sys.stdout:
            out.close()
    return EXIT_OK


def _selftest(_args) -> int:
    ok = True
    for kind in KINDS:
        for eps in (0.3, 0.5, 1.0):
            fn = HighOrderFn(kind, epsilon=eps, m=4) if kind == "xu" else HighOrderFn(kind, epsilon=eps)
            rep = verify_sandwich(fn, n_samples=2000)
            ok &= rep.passed
            print(f"sandwich {kind:8s} eps={eps:.1f} {'ok' if rep.passed else 'FAIL'} "
                  f"(worst slack {rep.worst_slack:.3g})")
    rng = np.random.default_rng(0)
    res = max(abs(knight_identity_check(t, u, v))
              for t, u, v in zip(rng.uniform(0.01, 0.99, 1000), rng.normal(size=1000),
                                 rng.normal(size=1000)))
    ok &= res <= 1e-12
    print(f"knight identity max residual {res:.3g}")
    inp = BoundInputs(n=1000, p=10, epsilon=1.0, delta=0.05, r=10, sup_risk=1, EH=1, EH_pow=1)
    rel = abs(excess_bound_thm1(inp, HighOrderFn("chen", 1.0)) / excess_bound_thm2(inp) - 1)
    ok &= rel <= 1e-10
    print(f"bound cross-check relative gap {rel:.3g}")
    print("selftest", "passed" if ok else "FAILED")
    return EXIT_OK if ok else 1


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command in ("simulate", "fit-csv"):
            return _run(args)
        if args.command == "bounds":
            return _bounds(args)
        return _selftest(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
