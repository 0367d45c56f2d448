"""Command-line entry point.

Exit codes: 0 success, 1 runtime failure (or a failed invariant), 2 usage or
configuration error.
"""

import argparse
import csv
import hashlib
import io
import json
import logging
import os
import platform
import sys

import numpy as np
import scipy

from . import __version__
from ._io import atomic_write_text
from .bounds import BoundKind, BoundSpec, error_bound_grid, gamma_condition
from .errors import ConfigError, SchemaError
from .experiment import (
    ENV_PREFIX,
    SCHEMA_VERSION,
    load,
    load_config,
    persist,
    persist_summary,
    run_monte_carlo,
    summarize,
)
from .gp import Dataset, fit
from .invariants import SUITES, run_suite
from .kernels import SquaredExponential, gram_matrix

log = logging.getLogger("wkbo")

COMPARE_HEADER = ["x", "eta_wk", "eta_ay", "eta_fiedler", "gamma", "d", "lemma5a", "lemma5b"]


class UsageError(Exception):
    pass


def _config(args):
    overrides = {
        "n_runs": getattr(args, "runs", None),
        "T": getattr(args, "steps", None),
        "grid_points": getattr(args, "grid", None),
        "delta": getattr(args, "delta", None),
    }
    bound = getattr(args, "bound", None)
    if bound and bound != "all":
        overrides["methods"] = [bound]
    return load_config(args.config, overrides)


def _fmt(v):
    return format(float(v), ".17g")


def cmd_run_experiment(args):
    spec = _config(args)
    results = run_monte_carlo(spec, base_seed=args.seed, parallelism=args.parallelism)
    summary = summarize(results)
    out = args.out
    persist(results, os.path.join(out, "results.csv"))
    persist_summary(summary, os.path.join(out, "summary.csv"))
    cfg = spec.to_mapping()
    manifest = {
        "schema_version": SCHEMA_VERSION,
        "config": cfg,
        "config_sha256": hashlib.sha256(json.dumps(cfg, sort_keys=True).encode()).hexdigest(),
        "seed": args.seed,
        "parallelism": args.parallelism,
        "rows": sum(r.T for recs in results.values() for r in recs),
        "f_opt_used": spec.f_opt_computed,
        "final_mean_cum_regret": {m: s.final_mean_regret for m, s in summary.methods.items()},
        "relative_increase_pct": summary.relative_increase,
        "versions": {
            "wkbo": __version__,
            "python": platform.python_version(),
            "numpy": np.__version__,
            "scipy": scipy.__version__,
        },
    }
    atomic_write_text(os.path.join(out, "manifest.json"), json.dumps(manifest, indent=2) + "\n")
    for m, s in summary.methods.items():
        rel = summary.relative_increase.get(m)
        extra = f" ({rel:+.2f}% vs {summary.reference})" if rel is not None and m != summary.reference else ""
        print(f"{m}: mean R_T={s.final_mean_regret:.4f} mean safe measure={s.mean_safe_measure[-1]:.4f}{extra}")
    print(f"wrote {out}/results.csv, summary.csv, manifest.json")
    return 0


def _read_xy(path):
    try:
        with open(path, newline="") as fh:
            rows = list(csv.DictReader(fh))
    except OSError as exc:
        raise UsageError(f"cannot read data file {path}: {exc}") from None
    if rows and not {"x", "y"} <= set(rows[0]):
        raise UsageError(f"data file {path} needs columns x,y")
    try:
        return np.array([float(r["x"]) for r in rows]), np.array([float(r["y"]) for r in rows])
    except ValueError as exc:
        raise UsageError(f"data file {path}: {exc}") from None


def compare_bounds_report(spec, xs, ys, grid_size):
    """Rows of the bound comparison for one dataset (see ``COMPARE_HEADER``)."""
    kern = SquaredExponential(spec.sigma_se, spec.l_se)
    model = fit(kern, Dataset(xs, ys), spec.sigma_noise, spec.jitter)
    grid = np.linspace(spec.domain[0], spec.domain[1], grid_size)
    etas = {}
    post = None
    for kind in BoundKind:
        b = error_bound_grid(model, BoundSpec(kind, spec.B, spec.delta), grid, post)
        post = b.posterior
        etas[kind] = b.eta
    gamma, cond_a = gamma_condition(gram_matrix(kern, model.data.inputs), spec.sigma_noise)
    D = len(model.data)
    cond_b = D >= 2 or (D == 1 and spec.delta < 0.5)
    rows = []
    for i, x in enumerate(grid):
        rows.append([_fmt(x), _fmt(etas[BoundKind.WIENER_KERNEL][i]), _fmt(etas[BoundKind.ABBASI_YADKORI][i]),
                     _fmt(etas[BoundKind.FIEDLER][i]), _fmt(gamma), D, int(cond_a), int(cond_b)])
    return rows


def cmd_compare_bounds(args):
    spec = _config(args)
    if args.data:
        xs, ys = _read_xy(args.data)
    else:
        rng = np.random.default_rng(args.seed)
        xs = rng.uniform(spec.domain[0], spec.domain[1], args.synthetic)
        ys = spec.f(xs) + spec.sigma_noise * rng.standard_normal(args.synthetic)
    rows = compare_bounds_report(spec, xs, ys, args.grid or 101)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(COMPARE_HEADER)
    w.writerows(rows)
    if args.out:
        atomic_write_text(args.out, buf.getvalue())
    else:
        sys.stdout.write(buf.getvalue())
    return 0


def cmd_verify_invariants(args):
    names = list(SUITES) if args.suite == "all" else [args.suite]
    if any(n not in SUITES for n in names):
        raise UsageError(f"unknown suite {args.suite!r}; choose from {', '.join(SUITES)} or all")
    failed = 0
    for n in names:
        res = run_suite(n, trials=args.trials, seed=args.seed)
        print(res.line(), flush=True)
        failed += not res.passed
    return 1 if failed else 0


def cmd_summarize(args):
    try:
        results = load(args.results)
    except OSError as exc:
        raise UsageError(f"cannot read {args.results}: {exc}") from None
    if not results:
        print("no runs in file")
        return 0
    summary = summarize(results)
    for m, s in summary.methods.items():
        rel = summary.relative_increase.get(m)
        print(f"{m}: runs={len(results[m])} mean R_T={s.final_mean_regret:.4f} "
              f"band=[{s.lo_band[-1]:.4f}, {s.hi_band[-1]:.4f}] "
              f"mean safe measure={s.mean_safe_measure[-1]:.4f}"
              + (f" rel={rel:+.2f}%" if rel is not None else ""))
    if args.out:
        persist_summary(summary, args.out)
    return 0


def build_parser():
    p = argparse.ArgumentParser(
        prog="wkbo",
        description="Safe Bayesian optimization with Wiener-kernel error bounds.",
        epilog=f"Config keys can be overridden with {ENV_PREFIX}<KEY> environment variables "
               f"(e.g. {ENV_PREFIX}DELTA=0.01); flags take precedence over both.",
    )
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", help="JSON config; defaults to the shipped benchmark config")
        sp.add_argument("--delta", type=float)
        sp.add_argument("--grid", type=int)

    r = sub.add_parser("run-experiment", help="Monte Carlo safe-BO benchmark")
    common(r)
    r.add_argument("--out", default="results")
    r.add_argument("--seed", type=int, default=0)
    r.add_argument("--parallelism", type=int, default=1)
    r.add_argument("--runs", type=int)
    r.add_argument("--steps", type=int)
    r.add_argument("--bound", choices=["wk", "ay", "fiedler", "all"], default="all")
    r.set_defaults(func=cmd_run_experiment)

    c = sub.add_parser("compare-bounds", help="tabulate the three error bounds on one dataset")
    common(c)
    src = c.add_mutually_exclusive_group()
    src.add_argument("--data", help="CSV with columns x,y")
    src.add_argument("--synthetic", type=int, default=25, metavar="D",
                     help="draw D noisy benchmark observations (default 25)")
    c.add_argument("--seed", type=int, default=0)
    c.add_argument("--out")
    c.set_defaults(func=cmd_compare_bounds)

    v = sub.add_parser("verify-invariants", help="run randomized property suites")
    v.add_argument("--suite", default="all", help=f"one of {', '.join(SUITES)}, or all")
    v.add_argument("--trials", type=int)
    v.add_argument("--seed", type=int)
    v.set_defaults(func=cmd_verify_invariants)

    s = sub.add_parser("summarize", help="summarize a results CSV")
    s.add_argument("results")
    s.add_argument("--out", help="also write the summary CSV here")
    s.set_defaults(func=cmd_summarize)
    return p


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING)
    try:
        return args.func(args)
    except ConfigError as exc:
        where = f" (field {exc.field!r})" if exc.field else ""
        print(f"config error{where}: {exc}", file=sys.stderr)
        return 2
    except (UsageError, SchemaError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001
        log.debug("runtime failure", exc_info=True)
        print(f"runtime error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
