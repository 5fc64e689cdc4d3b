"""Command-line front end: run / validate / rate / report."""

import argparse
import json
import sys
from pathlib import Path

from .diagnostics import fit_rate
from .experiments import (
    median_errors_by_n,
    read_results_csv,
    run_experiment,
    validate_config,
)


def _cmd_run(args) -> int:
    rows, summary = run_experiment(args.config, seed_offset=args.seed_offset,
                                   workers=args.workers)
    out = json.loads(json.dumps(summary))
    print(json.dumps(out, indent=1, sort_keys=True))
    bad = [r for r in rows if not (r["l2_mean"] == r["l2_mean"])]
    if bad:
        print(f"warning: {len(bad)} cell(s) failed", file=sys.stderr)
    return 0


def _cmd_validate(args) -> int:
    res = validate_config(args.config)
    for w in res.warnings:
        print(f"warning: {w}")
    for e in res.errors:
        print(f"error: {e}")
    if res.ok:
        print("ok")
        return 0
    return 1


def _cmd_rate(args) -> int:
    rows = read_results_csv(args.results)
    ns, medians = median_errors_by_n(rows, args.column)
    if len(ns) < 3:
        print("error: need results at three or more sample sizes", file=sys.stderr)
        return 1
    fit = fit_rate(ns, medians)
    payload = fit.to_dict()
    payload["column"] = args.column
    print(json.dumps(payload, indent=1, sort_keys=True))
    if args.out:
        Path(args.out).write_text(json.dumps(payload, sort_keys=True),
                                  encoding="utf-8")
    return 0


def _cmd_report(args) -> int:
    rows = read_results_csv(args.results)
    if not rows:
        print("no rows")
        return 1
    print(f"{'N':>8} {'seed':>5} {'l2_mean':>12} {'l2_map':>12} "
          f"{'d_g':>12} {'acc':>6} {'nm1':>4} {'nm2':>4} {'mm2':>4}")
    for r in rows:
        print(f"{r['N']:>8} {r['seed']:>5} {r['l2_mean']:>12.5g} "
              f"{r['l2_map']:>12.5g} {r['d_g_mean']:>12.5g} "
              f"{r['accept_rate']:>6.3f} {r['nm1']:>4} {r['nm2']:>4} {r['mm2']:>4}")
    ns, medians = median_errors_by_n(rows)
    print("\nmedian l2_mean by N:")
    for n, m in zip(ns, medians):
        print(f"  N = {n:>7}: {m:.6g}")
    if len(ns) >= 3:
        fit = fit_rate(ns, medians)
        print(f"rate fit: slope = {fit.slope:.4f}, r2 = {fit.r2:.4f}")
    for key in ("nm1", "nm2", "mm2"):
        sat = sum(r[key] for r in rows)
        print(f"{key}: satisfied in {sat}/{len(rows)} cells")
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="torusbayes",
        description="Surrogate Bayesian inversion experiments on the torus")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run an experiment config end to end")
    p_run.add_argument("config")
    p_run.add_argument("--seed-offset", type=int, default=0,
                       help="offset applied to all cell seeds")
    p_run.add_argument("--workers", type=int, default=None,
                       help="worker count (default: TORUSBAYES_WORKERS or 1)")
    p_run.set_defaults(func=_cmd_run)

    p_val = sub.add_parser("validate", help="validate a config file")
    p_val.add_argument("config")
    p_val.set_defaults(func=_cmd_validate)

    p_rate = sub.add_parser("rate", help="fit a contraction rate to results")
    p_rate.add_argument("results")
    p_rate.add_argument("--column", default="l2_mean")
    p_rate.add_argument("--out", default=None, help="write the fit as JSON")
    p_rate.set_defaults(func=_cmd_rate)

    p_rep = sub.add_parser("report", help="print a human-readable summary")
    p_rep.add_argument("results")
    p_rep.set_defaults(func=_cmd_report)

    args = parser.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
