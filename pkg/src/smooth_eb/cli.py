"""Command-line interface.

Every command prints a one-line JSON summary on stdout.  Exit codes: 0 on
success, 2 for usage errors, 3 for bad input data, 4 for numerical
failures.
"""
import argparse
import csv
import json
import math
import os
import sys

import numpy as np

from ._rng import child_seeds, fresh_seed
from .coverage import calibrate_threshold, hpd_set
from .exceptions import DataError, NumericalError
from .gof import glrt_bootstrap_test, slr_gof_test
from .identify import (
    NeighborhoodOptions,
    _bracket,
    c0_slr_upper_bound,
    c0_upper_bound,
    estimate_c0,
)
from .model import model_from_json, model_to_json, read_sample_csv
from .npmle import FitOptions, solve_npmle
from .posterior import posterior_mean_theta, posterior_mean_xi
from .simulate import named_scenario, run_figure_fixture, run_scenario

EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 2, 3, 4


class UsageError(Exception):
    pass


def _emit(obj):
    print(json.dumps(obj, default=_json_default))


def _json_default(o):
    if isinstance(o, (np.integer,)):
        return int(o)
    if isinstance(o, (np.floating,)):
        return float(o)
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"cannot serialise {type(o).__name__}")


def _clean(d):
    """Replace non-finite floats by None so the output stays strict JSON."""
    if isinstance(d, dict):
        return {k: _clean(v) for k, v in d.items()}
    if isinstance(d, list):
        return [_clean(v) for v in d]
    if isinstance(d, float) and not math.isfinite(d):
        return None
    return d


def _seed(args):
    if args.seed is None:
        args.seed = fresh_seed()
        print(f"seed: {args.seed}", file=sys.stderr)
    return args.seed


def _threads(args):
    if args.threads is not None:
        t = args.threads
    else:
        env = os.environ.get("SMOOTH_EB_THREADS")
        try:
            t = int(env) if env else 1
        except ValueError:
            raise UsageError(f"SMOOTH_EB_THREADS must be an integer, got {env!r}")
    if t < 1:
        raise UsageError("--threads must be >= 1")
    return t


def _read_data(path):
    try:
        return read_sample_csv(path)
    except FileNotFoundError:
        raise DataError(f"--data: file not found: {path}")


def _read_model(path):
    try:
        with open(path, encoding="utf-8") as fh:
            return model_from_json(fh.read())
    except FileNotFoundError:
        raise DataError(f"--model: file not found: {path}")


def _write_text(path, text):
    if path in (None, "-"):
        sys.stdout.write(text)
    else:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)


def _parse_c(value):
    if value == "auto":
        return value
    try:
        c = float(value)
    except ValueError:
        raise UsageError(f"--c must be a number or 'auto', got {value!r}")
    if not c >= 0:
        raise UsageError(f"--c must be >= 0, got {value}")
    return c


def _resolve_c(value, sample, seed):
    c = _parse_c(value)
    if c == "auto":
        est = estimate_c0(sample, seed=seed)
        return est.c0_hat, est
    return c, None


# ---------------------------------------------------------------- commands


def cmd_fit(args):
    sample = _read_data(args.data)
    seed = _seed(args) if args.c == "auto" else args.seed
    c, est = _resolve_c(args.c, sample, seed)
    opts = FitOptions(grid_size=args.grid_size, solver=args.solver)
    fit = solve_npmle(sample, c, opts)
    _write_text(args.out, model_to_json(fit.model) + ("\n" if args.out in (None, "-") else ""))
    summary = {
        "command": "fit",
        "out": args.out,
        "n": len(sample),
        "c": c,
        "n_atoms": len(fit.mixture),
        "log_likelihood": fit.log_likelihood,
        "optimality_gap": fit.optimality_gap,
        "iterations": fit.iterations,
        "converged": fit.converged,
        "seed": seed,
    }
    if est is not None:
        summary["c0_estimate"] = est.to_dict()
    print(
        f"fit: {len(fit.mixture)} atoms, optimality_gap={fit.optimality_gap:.3g}",
        file=sys.stderr,
    )
    if args.out not in (None, "-"):
        _emit(_clean(summary))


def cmd_denoise(args):
    model = _read_model(args.model)
    sample = _read_data(args.data)
    xi = posterior_mean_xi(model, sample.x, sample.sigma)
    th = posterior_mean_theta(model, sample.x, sample.sigma)
    rows = [("x", "sigma", "xi_hat", "theta_hat")]
    rows += [tuple(repr(float(v)) for v in r) for r in zip(sample.x, sample.sigma, xi, th)]
    _write_text(args.out, _csv_text(rows))
    if args.out not in (None, "-"):
        _emit({"command": "denoise", "out": args.out, "n": len(sample)})


def _csv_text(rows):
    import io

    buf = io.StringIO()
    csv.writer(buf, lineterminator="\n").writerows(rows)
    return buf.getvalue()


def cmd_coverage(args):
    model = _read_model(args.model)
    if model.c <= 0:
        raise DataError("--model: coverage sets need a model with c > 0")
    sample = _read_data(args.data)
    if not 0 < args.beta < 1:
        raise UsageError(f"--beta must lie in (0, 1), got {args.beta}")
    levels = sorted(set(float(s) for s in sample.sigma))
    rules = {}
    if args.hpd:
        def set_at(x, s):
            return hpd_set(model, s, x, args.beta)
    else:
        seed = _seed(args)
        for s, sd in zip(levels, child_seeds(seed, len(levels))):
            rules[s] = calibrate_threshold(model, s, args.beta, args.mc, sd)

        def set_at(x, s):
            return rules[s](x)

    rows = [("x", "sigma", "set", "length", "contains_zero")]
    lengths, zero = [], 0
    for x, s in zip(sample.x, sample.sigma):
        st = set_at(float(x), float(s))
        hit = bool(st.contains(0.0))
        zero += hit
        lengths.append(st.length)
        rows.append((repr(float(x)), repr(float(s)), st.format(), repr(float(st.length)), int(hit)))
    _write_text(args.out, _csv_text(rows))
    summary = {
        "command": "coverage",
        "out": args.out,
        "n": len(sample),
        "beta": args.beta,
        "method": "hpd" if args.hpd else "optimal",
        "mean_length": float(np.mean(lengths)),
        "n_excluding_zero": len(sample) - zero,
        "seed": None if args.hpd else args.seed,
        "mc": None if args.hpd else args.mc,
        "k_hat": {str(s): r.k_hat for s, r in rules.items()} or None,
    }
    if args.out not in (None, "-"):
        _emit(_clean(summary))


def cmd_estimate_c0(args):
    sample = _read_data(args.data)
    opts = NeighborhoodOptions(grid_size=args.grid_size)
    if args.method == "slr":
        beta = args.ucb if args.ucb is not None else 0.05
        seed = args.seed
        c0 = c0_slr_upper_bound(sample, beta, seed=seed)
        _, _, floor = _bracket(sample)
        out = {
            "c0_hat": c0,
            "sigma0_hat": math.sqrt(c0**2 + floor**2),
            "eta": None,
            "mode": f"slr-ucb({beta})",
            "n": len(sample),
            "split": "even/odd" if seed is None else f"random (seed {seed})",
        }
    elif args.ucb is not None:
        est = c0_upper_bound(sample, args.ucb, opts)
        out = _c0_json(est)
    else:
        seed = _seed(args)
        est = estimate_c0(sample, opts, seed=seed)
        out = _c0_json(est)
        out["seed"] = seed
    text = json.dumps(_clean(out))
    if args.out:
        _write_text(args.out, text + "\n")
    _emit(_clean(out))


def _c0_json(est):
    return {
        "c0_hat": est.c0_hat,
        "sigma0_hat": est.sigma0_hat,
        "eta": est.eta_used,
        "mode": est.mode,
        "n": est.n,
        "flag": est.flag,
    }


def cmd_test_gof(args):
    sample = _read_data(args.data)
    seed = _seed(args)
    c_seed, test_seed = child_seeds(seed, 2)
    c, _ = _resolve_c(args.c, sample, c_seed)
    if args.method == "slr":
        report = slr_gof_test(sample, c, args.beta, split_seed=test_seed)
    else:
        report = glrt_bootstrap_test(sample, c, args.beta, B=args.B, seed=test_seed)
    out = report.to_dict()
    out["c"] = c
    out["base_seed"] = seed
    if args.out:
        _write_text(args.out, json.dumps(_clean(out)) + "\n")
    _emit(_clean(out))


def cmd_simulate(args):
    seed = _seed(args)
    reps = 100 if args.paper_scale else args.reps
    kw = dict(n=args.n, reps=reps, seed=seed, include_oracle=args.include_oracle)
    if args.calib_mc is not None:
        kw["calib_mc"] = args.calib_mc
    if args.eval_mc is not None:
        kw["eval_mc"] = args.eval_mc
    if args.scenario == "table2":
        sc = named_scenario("table2", prior=args.prior, **kw)
    else:
        sc = named_scenario(args.scenario, a=args.a, mode=args.mode, **kw)
    report = run_scenario(sc, threads=_threads(args))
    d = _clean(report.to_dict())
    rows = d.pop("rows")
    if args.out:
        _write_text(args.out, json.dumps(dict(d, rows=rows), indent=2) + "\n")
        rows_path = args.rows_csv or os.path.splitext(args.out)[0] + "_reps.csv"
        _write_text(rows_path, report.rows_csv())
        d["rows_csv"] = rows_path
    _emit(d)


def cmd_figure(args):
    seed = _seed(args)
    c = None if args.c == "auto" else _parse_c(args.c)
    fig = run_figure_fixture(args.name, args.n, seed, c)
    os.makedirs(args.out_dir, exist_ok=True)
    prior_path = os.path.join(args.out_dir, f"{args.name}_prior.csv")
    marg_path = os.path.join(args.out_dir, f"{args.name}_marginal.csv")
    _write_text(prior_path, fig.prior_csv())
    _write_text(marg_path, fig.marginal_csv())
    out = {"command": "figure", "name": args.name, "n": args.n, "seed": seed, "c": fig.c,
           "prior_csv": prior_path, "marginal_csv": marg_path}
    out.update(fig.errors())
    _emit(_clean(out))


# ------------------------------------------------------------------ parser


def _positive_int(text):
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}")
    if v < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {v}")
    return v


def build_parser():
    p = argparse.ArgumentParser(prog="smooth-eb", description="Smooth NPMLE empirical Bayes.")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, seed=True):
        if seed:
            sp.add_argument("--seed", type=int, default=None, help="master seed (drawn and printed if omitted)")
        sp.add_argument("--threads", type=_positive_int, default=None,
                        help="worker processes (default: SMOOTH_EB_THREADS or 1)")

    s = sub.add_parser("fit", help="fit the smooth NPMLE")
    s.add_argument("--data", required=True)
    s.add_argument("--c", default="auto", help="smoothing scale or 'auto'")
    s.add_argument("--out", required=True)
    s.add_argument("--grid-size", type=_positive_int, default=None)
    s.add_argument("--solver", choices=["cnm", "em"], default="cnm")
    common(s)
    s.set_defaults(func=cmd_fit)

    s = sub.add_parser("denoise", help="posterior means")
    s.add_argument("--model", required=True)
    s.add_argument("--data", required=True)
    s.add_argument("--out", required=True)
    common(s, seed=False)
    s.set_defaults(func=cmd_denoise)

    s = sub.add_parser("coverage", help="marginal coverage sets")
    s.add_argument("--model", required=True)
    s.add_argument("--data", required=True)
    s.add_argument("--beta", type=float, default=0.05)
    s.add_argument("--mc", type=_positive_int, default=100000)
    s.add_argument("--hpd", action="store_true", help="highest posterior density sets")
    s.add_argument("--out", required=True)
    common(s)
    s.set_defaults(func=cmd_coverage)

    s = sub.add_parser("estimate-c0", help="largest Gaussian component of the prior")
    s.add_argument("--data", required=True)
    s.add_argument("--ucb", type=float, default=None, metavar="BETA")
    s.add_argument("--method", choices=["neighborhood", "slr"], default="neighborhood")
    s.add_argument("--grid-size", type=_positive_int, default=200)
    s.add_argument("--out", default=None)
    common(s)
    s.set_defaults(func=cmd_estimate_c0)

    s = sub.add_parser("test-gof", help="test for a single Gaussian prior")
    s.add_argument("--data", required=True)
    s.add_argument("--method", choices=["slr", "glrt"], default="slr")
    s.add_argument("--B", type=_positive_int, default=100)
    s.add_argument("--beta", type=float, default=0.05)
    s.add_argument("--c", default="auto")
    s.add_argument("--out", default=None)
    common(s)
    s.set_defaults(func=cmd_test_gof)

    s = sub.add_parser("simulate", help="coverage simulation scenarios")
    s.add_argument("--scenario", choices=["table1", "table2", "table3"], required=True)
    s.add_argument("--a", type=float, default=2.0)
    s.add_argument("--prior", choices=["laplace", "gamma"], default="laplace")
    s.add_argument("--mode", choices=["oracle", "estimate"], default="oracle")
    s.add_argument("--n", type=_positive_int, default=1000)
    s.add_argument("--reps", type=_positive_int, default=20)
    s.add_argument("--paper-scale", action="store_true", help="100 replications")
    s.add_argument("--calib-mc", type=_positive_int, default=None)
    s.add_argument("--eval-mc", type=_positive_int, default=None)
    s.add_argument("--include-oracle", action="store_true")
    s.add_argument("--out", default=None)
    s.add_argument("--rows-csv", default=None)
    common(s)
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("figure", help="prior and marginal curves of a fixture")
    s.add_argument("--name", choices=["two-comp", "laplace"], required=True)
    s.add_argument("--n", type=_positive_int, default=1000)
    s.add_argument("--c", default="auto")
    s.add_argument("--out-dir", default=".")
    common(s)
    s.set_defaults(func=cmd_figure)
    return p


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, UnicodeDecodeError, IsADirectoryError, PermissionError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (NumericalError, FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    return 0


def entry():
    sys.exit(main())
