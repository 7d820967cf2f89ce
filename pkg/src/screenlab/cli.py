"""Command-line interface.

Verbs: run (Monte Carlo experiment), gen (emit a synthetic dataset as CSV),
screen (marginal ranking as CSV), isis (trace as JSON lines plus model CSV),
var1/var2 (split screening), bound (false-positive bound arithmetic), and
fit (penalized fit on a CSV file).  A key = value config file can mirror any
flag; explicit flags win.
"""

import argparse
import csv
import json
import math
import os
import sys
from dataclasses import asdict, fields

import numpy as np

from .data import Dataset, RngSpec, load_csv, standardize
from .harness import (ExperimentConfig, back_transform, emit_report,
                      run_experiment)
from .losses import loss_from_string
from .penalties import penalty_from_string
from .screening import ScreenConfig, isis, isis_no_deletion, sis_rank
from .simgen import PRESETS, gen_dataset, preset
from .solver import SolverConfig, fit_penalized
from .variants import theorem1_bound, var1_isis, var1_screen, var2_isis, var2_screen


def _read_config_file(path):
    out = {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise SystemExit(f"{path}:{lineno}: expected key = value")
            key, val = (s.strip() for s in line.split("=", 1))
            out[key.replace("-", "_")] = val
    return out


def _coerce(value, target):
    if target is bool:
        return value.lower() in ("1", "true", "yes", "on")
    if target in (int, float):
        return target(value)
    return value


def _apply_config_file(args, parser):
    if not getattr(args, "config", None):
        return args
    overrides = _read_config_file(args.config)
    actions = {a.dest: a for a in parser._actions}
    for key, raw in overrides.items():
        if key not in vars(args):
            raise SystemExit(f"config file key {key!r} matches no flag")
        action = actions.get(key)
        default = action.default if action is not None else None
        if getattr(args, key) != default:
            continue    # explicit flag wins over the file
        if action is not None and action.type is not None:
            value = action.type(raw)
        elif isinstance(default, bool):
            value = _coerce(raw, bool)
        else:
            value = raw
        setattr(args, key, value)
    return args


def _load_dataset(args):
    ds = load_csv(args.data, args.response,
                  kind=getattr(args, "response_kind", None))
    return standardize(ds) if args.standardize else ds


def _write_model_csv(path, fit, dataset):
    b0, beta = back_transform(fit, dataset)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        b0 = np.atleast_1d(b0)
        if b0.size == 1:
            w.writerow(["feature", "coefficient"])
            w.writerow(["(intercept)", repr(float(b0[0]))])
            for j in sorted(beta):
                w.writerow([dataset.name_of(j), repr(float(beta[j]))])
        else:
            w.writerow(["feature"] + [f"class{k+1}" for k in range(b0.size)])
            w.writerow(["(intercept)"] + [repr(float(v)) for v in b0])
            for j in sorted(beta):
                w.writerow([dataset.name_of(j)]
                           + [repr(float(v)) for v in np.atleast_1d(beta[j])])


def _solver_cfg_from(args):
    sel = args.lambda_selection
    folds = 5
    if sel == "cv10":
        sel, folds = "cv", 10
    elif sel == "cv5":
        sel, folds = "cv", 5
    return SolverConfig(selection=sel, cv_folds=folds, n_lambda=args.n_lambda,
                        lambda_ratio=args.lambda_ratio,
                        lambda_value=args.lambda_value)


def _print_config(cfg):
    for f in fields(cfg):
        print(f"{f.name} = {getattr(cfg, f.name)}")


def _add_common_fit_flags(p):
    p.add_argument("--data", required=True, help="input CSV with a header row")
    p.add_argument("--response", required=True, help="response column name")
    p.add_argument("--response-kind", default=None,
                   choices=["real", "binary", "count", "class"])
    p.add_argument("--loss", default="quadratic")
    p.add_argument("--penalty", default="scad")
    p.add_argument("--no-standardize", dest="standardize",
                   action="store_false", help="rank/fit on raw columns")
    p.add_argument("--lambda-selection", default="bic",
                   choices=["bic", "cv5", "cv10", "tune", "fixed"])
    p.add_argument("--lambda-value", type=float, default=None)
    p.add_argument("--n-lambda", type=int, default=100)
    p.add_argument("--lambda-ratio", type=float, default=1e-3)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--config", default=None, help="key = value config file")


def _add_screen_config_flags(p):
    p.add_argument("--d", type=int, default=None,
                   help="model-size cap; default floor(n/log n)")
    p.add_argument("--schedule", default="two-thirds-first",
                   choices=["two-thirds-first", "capped-five"])
    p.add_argument("--conditional", default="joint",
                   choices=["joint", "residual"])
    p.add_argument("--max-isis-iter", type=int, default=10)


def main(argv=None):
    parser = argparse.ArgumentParser(
        prog="screenlab",
        description="feature screening and sparse penalized fitting")
    sub = parser.add_subparsers(dest="verb", required=True)

    p_run = sub.add_parser("run", help="Monte Carlo experiment on a preset")
    p_run.add_argument("--preset", required=True, choices=sorted(PRESETS))
    p_run.add_argument("--methods", default="van-sis,van-isis")
    p_run.add_argument("--reps", type=int, default=20)
    p_run.add_argument("--seed", type=int, default=0)
    p_run.add_argument("--out", required=True)
    p_run.add_argument("--d", type=int, default=None)
    p_run.add_argument("--d-rule", default=None,
                       choices=["nlog", "n2log", "n4log"])
    p_run.add_argument("--tuning", default=None,
                       choices=["cv5", "cv10", "bic", "tune"])
    p_run.add_argument("--penalty", default="scad")
    p_run.add_argument("--test-multiplier", type=int, default=25)
    p_run.add_argument("--paper-scale", action="store_true")
    p_run.add_argument("--workers", type=int, default=None)
    p_run.add_argument("--no-deletion", action="store_true")
    p_run.add_argument("--config", default=None)

    p_gen = sub.add_parser("gen", help="emit a synthetic dataset as CSV")
    p_gen.add_argument("--preset", required=True, choices=sorted(PRESETS))
    p_gen.add_argument("--n", type=int, default=None)
    p_gen.add_argument("--seed", type=int, default=0)
    p_gen.add_argument("--out", required=True)
    p_gen.add_argument("--config", default=None)

    p_screen = sub.add_parser("screen", help="marginal utility ranking")
    _add_common_fit_flags(p_screen)
    p_screen.add_argument("--size", type=int, default=None,
                          help="print only the best SIZE features")
    p_screen.add_argument("--out", default=None, help="output CSV (default stdout)")

    p_isis = sub.add_parser("isis", help="iterated screening")
    _add_common_fit_flags(p_isis)
    _add_screen_config_flags(p_isis)
    p_isis.add_argument("--no-deletion", action="store_true")
    p_isis.add_argument("--out", default=".",
                        help="directory for isis_trace.jsonl / isis_model.csv")

    for name in ("var1", "var2"):
        pv = sub.add_parser(name, help=f"split-screening variant {name[-1]}")
        _add_common_fit_flags(pv)
        _add_screen_config_flags(pv)
        pv.add_argument("--iterated", action="store_true")
        pv.add_argument("--out", default=".")
        if name == "var1":
            pv.add_argument("--groups", type=int, default=2)
        else:
            pv.add_argument("--intersect-prune", action="store_true",
                            help="literal intersect pruning (degenerate)")

    p_bound = sub.add_parser("bound", help="false-positive bound arithmetic")
    p_bound.add_argument("--d", type=int, required=True)
    p_bound.add_argument("--p", type=int, required=True)
    p_bound.add_argument("--s", type=int, required=True)
    p_bound.add_argument("--r", type=int, default=1)

    p_fit = sub.add_parser("fit", help="penalized fit on a CSV dataset")
    _add_common_fit_flags(p_fit)
    p_fit.add_argument("--out", default=None, help="model CSV (default stdout)")
    p_fit.add_argument("--print-config", action="store_true",
                       help="print solver defaults and exit")

    args = parser.parse_args(argv)
    active = None
    for action in parser._subparsers._group_actions:
        active = action.choices[args.verb]
    args = _apply_config_file(args, active)

    if args.verb == "run":
        methods = tuple(m.strip() for m in args.methods.split(",") if m.strip())
        cfg = ExperimentConfig(
            preset=args.preset, methods=methods, n_replicates=args.reps,
            seed=args.seed, d=args.d, d_rule=args.d_rule, tuning=args.tuning,
            penalty=args.penalty, test_multiplier=args.test_multiplier,
            paper_scale=args.paper_scale, workers=args.workers,
            no_deletion=args.no_deletion)
        report = run_experiment(cfg)
        paths = emit_report(report, args.out)
        for path in paths:
            print(path)
        if report.failures:
            print(f"{report.failures} method runs failed", file=sys.stderr)
            return 1
        return 0

    if args.verb == "gen":
        pre = preset(args.preset)
        design = pre.design if args.n is None else \
            type(pre.design)(pre.design.p, pre.design.case, args.n)
        ds = gen_dataset(design, pre.model, RngSpec(args.seed))
        with open(args.out, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow([f"x{j+1}" for j in range(ds.p)] + ["y"])
            for i in range(ds.n):
                w.writerow([repr(float(v)) for v in ds.x[i]]
                           + [repr(float(ds.y.values[i]))])
        print(args.out)
        return 0

    if args.verb == "bound":
        b = theorem1_bound(args.d, args.p, args.s, args.r)
        print(f"exact {b.exact!r}")
        print(f"loose {b.loose!r}")
        print(f"side_condition {b.side_condition}")
        print(f"vacuous {b.vacuous}")
        return 0

    if args.verb == "fit" and args.print_config:
        _print_config(SolverConfig())
        return 0

    loss = loss_from_string(args.loss)
    dataset = _load_dataset(args)

    if args.verb == "screen":
        ranked, utils = sis_rank(dataset, loss)
        if args.size is not None:
            ranked, utils = ranked[:args.size], utils[:args.size]
        out = open(args.out, "w", newline="") if args.out else sys.stdout
        w = csv.writer(out)
        w.writerow(["rank", "feature", "utility"])
        for i, (j, u) in enumerate(zip(ranked, utils), 1):
            w.writerow([i, dataset.name_of(j), repr(float(u))])
        if args.out:
            out.close()
            print(args.out)
        return 0

    pen = penalty_from_string(args.penalty)
    cfg = _solver_cfg_from(args)

    if args.verb == "fit":
        fit = fit_penalized(dataset, loss, dataset.usable_columns(), pen, cfg,
                            rng=RngSpec(args.seed))
        if args.out:
            _write_model_csv(args.out, fit, dataset)
            print(args.out)
        else:
            b0, beta = back_transform(fit, dataset)
            print("(intercept)", *np.atleast_1d(b0))
            for j in sorted(beta):
                print(dataset.name_of(j), *np.atleast_1d(beta[j]))
        print(f"lambda {fit.lam!r} objective {fit.objective!r} "
              f"active {fit.active.size}", file=sys.stderr)
        return 0

    d = args.d if args.d is not None else max(1, int(dataset.n / math.log(dataset.n)))
    screen_cfg = ScreenConfig(d, schedule=args.schedule,
                              conditional=args.conditional,
                              max_isis_iter=args.max_isis_iter)

    if args.verb == "isis":
        runner = isis_no_deletion if args.no_deletion else isis
        trace = runner(dataset, loss, pen, screen_cfg, cfg,
                       rng=RngSpec(args.seed))
        _emit_trace(args.out, trace, dataset)
        return 0

    rng = RngSpec(args.seed)
    if args.verb == "var1":
        if args.iterated:
            trace = var1_isis(dataset, loss, pen, screen_cfg, rng,
                              solver_cfg=cfg, k_groups=args.groups)
            _emit_trace(args.out, trace, dataset, prefix="var1")
        else:
            res = var1_screen(dataset, loss, d, rng, k_groups=args.groups)
            _emit_split(args.out, res, dataset, "var1")
        return 0

    if args.verb == "var2":
        if args.iterated:
            trace = var2_isis(dataset, loss, pen, screen_cfg, rng,
                              solver_cfg=cfg,
                              prune="intersect" if args.intersect_prune else "union")
            _emit_trace(args.out, trace, dataset, prefix="var2")
        else:
            res = var2_screen(dataset, loss, d, rng)
            _emit_split(args.out, res, dataset, "var2")
        return 0

    raise SystemExit(f"unhandled verb {args.verb}")


def _emit_trace(outdir, trace, dataset, prefix="isis"):
    os.makedirs(outdir, exist_ok=True)
    tpath = os.path.join(outdir, f"{prefix}_trace.jsonl")
    with open(tpath, "w") as fh:
        for rec in trace.iterations:
            fh.write(json.dumps({
                "iteration": rec.r, "k": rec.k,
                "recruited": [dataset.name_of(j) for j in rec.recruited],
                "retained": [dataset.name_of(j) for j in rec.model],
            }) + "\n")
        fh.write(json.dumps({
            "reason": trace.reason,
            "final_model": [dataset.name_of(j) for j in trace.final_model],
            "objective": trace.final_fit.objective,
            "lambda": trace.final_fit.lam,
        }) + "\n")
    mpath = os.path.join(outdir, f"{prefix}_model.csv")
    _write_model_csv(mpath, trace.final_fit, dataset)
    print(tpath)
    print(mpath)


def _emit_split(outdir, res, dataset, prefix):
    os.makedirs(outdir, exist_ok=True)
    path = os.path.join(outdir, f"{prefix}_selection.csv")
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["feature", "in_intersection"]
                   + [f"half{i+1}" for i in range(len(res.half_sets))])
        members = set(res.intersection.tolist())
        union = sorted(set().union(*[set(h.tolist()) for h in res.half_sets]))
        for j in union:
            w.writerow([dataset.name_of(j), int(j in members)]
                       + [int(j in set(h.tolist())) for h in res.half_sets])
    print(path)
    return 0


if __name__ == "__main__":
    sys.exit(main())
