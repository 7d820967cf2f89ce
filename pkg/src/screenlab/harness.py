"""Monte Carlo experiment driver, metric battery, and report emission.

Each replicate draws train / tuning / test sets from independent RNG
streams, runs every requested method on the same draw, and computes the
standard ten-row metric battery.  Replicates can run on a process pool;
aggregation is a deterministic fold in replicate order either way.
"""

import hashlib
import json
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace, asdict

import numpy as np

from .data import Dataset, RngSpec, standardize
from .losses import MultiHinge, loss_from_string
from .penalties import L1, penalty_from_string
from .screening import ScreenConfig, isis, isis_no_deletion, sis_select
from .simgen import gen_dataset, preset, true_support
from .solver import SolverConfig, fit_penalized
from .variants import var1_isis, var1_screen, var2_isis, var2_screen

METHODS = ("van-sis", "van-isis", "var1-sis", "var1-isis", "var2-sis",
           "var2-isis", "lasso")

METRIC_ROWS = ("l1_error", "l2_error", "prop_incl_screen", "prop_incl_final",
               "model_size", "q2_train", "aic", "bic", "q2_test", "err01")

_TUNING_RULES = {"cv5": ("cv", 5), "cv10": ("cv", 10), "bic": ("bic", 0),
                 "tune": ("tune", 0)}


@dataclass
class ExperimentConfig:
    """Fully resolved experiment recipe.

    tuning is the final-stage lambda rule ("cv5" | "cv10" | "bic" | "tune");
    None defers to the preset (its desk-scale rule unless paper_scale).
    test_multiplier scales the test set relative to n (desk default 25;
    paper_scale restores 100 and the preset's published tuning rule).
    replicate_budget is the per-replicate wall-clock allowance in seconds;
    an over-budget replicate is recorded as a failure.
    """

    preset: str
    methods: tuple = ("van-sis", "van-isis")
    n_replicates: int = 20
    seed: int = 0
    d: int = None                 # None: preset value
    d_rule: str = None            # "nlog" | "n2log" | "n4log" overrides d
    tuning: str = None
    penalty: str = "scad"
    test_multiplier: int = 25
    paper_scale: bool = False
    workers: int = None
    n_lambda: int = 100
    lambda_ratio: float = 1e-3
    intermediate_n_lambda: int = 40
    schedule: str = "two-thirds-first"
    conditional: str = "joint"
    max_isis_iter: int = 10
    replicate_budget: float = 120.0
    no_deletion: bool = False     # swap the plain iterated screen's variant

    def __post_init__(self):
        if self.n_replicates < 1:
            raise ValueError("need at least one replicate")
        if not self.methods:
            raise ValueError("need at least one method")
        bad = set(self.methods) - set(METHODS)
        if bad:
            raise ValueError(f"unknown methods {sorted(bad)}")


@dataclass
class MetricsReport:
    config: dict
    config_hash: str
    methods: tuple
    rows: list                   # one dict per (method, replicate)
    summary: dict                # method -> metric -> aggregate
    failures: int


def _d_value(cfg, pre):
    n = pre.design.n
    if cfg.d_rule == "nlog":
        return int(n / math.log(n))
    if cfg.d_rule == "n2log":
        return int(n / (2 * math.log(n)))
    if cfg.d_rule == "n4log":
        return int(n / (4 * math.log(n)))
    return cfg.d if cfg.d is not None else pre.d


def _tuning_rule(cfg, pre):
    rule = cfg.tuning
    if rule is None:
        rule = pre.tuning if cfg.paper_scale else pre.desk_rule()
    if rule not in _TUNING_RULES:
        raise ValueError(f"unknown tuning rule {rule!r}")
    return rule


def _solver_cfg(cfg, rule, n_lambda=None):
    sel, folds = _TUNING_RULES[rule]
    return SolverConfig(selection=sel,
                        cv_folds=folds or 5,
                        n_lambda=n_lambda or cfg.n_lambda,
                        lambda_ratio=cfg.lambda_ratio)


def _standardize_like(raw, reference):
    z = (raw.x - reference.column_means) / reference.column_sds
    return replace(raw, x=z, column_means=reference.column_means,
                   column_sds=reference.column_sds, standardized=True,
                   constant_columns=reference.constant_columns)


def back_transform(fit, dataset):
    """Original-scale (intercepts, dense coefficient map) of a fit made on a
    standardized dataset."""
    if not dataset.standardized:
        return np.atleast_1d(fit.intercepts), dict(fit.beta)
    out = {}
    shift = np.zeros_like(np.atleast_1d(np.asarray(fit.intercepts, dtype=float)))
    for j, b in fit.beta.items():
        out[j] = np.asarray(b, dtype=float) / dataset.column_sds[j]
        shift = shift + out[j] * dataset.column_means[j]
    b0 = np.atleast_1d(np.asarray(fit.intercepts, dtype=float)) - shift
    return b0, out


def _predictor(fit, x):
    """Linear predictor(s) of a fit on rows already on the fit's scale."""
    k = len(np.atleast_1d(fit.intercepts))
    if k == 1:
        eta = np.full(x.shape[0], float(np.atleast_1d(fit.intercepts)[0]))
        for j, b in fit.beta.items():
            eta += x[:, j] * b
        return eta
    eta = np.tile(np.atleast_1d(fit.intercepts), (x.shape[0], 1))
    for j, b in fit.beta.items():
        eta += x[:, [j]] * np.asarray(b)[None, :]
    return eta


def _zero_one_error(loss, y, eta):
    if loss.name == "logistic":
        return float(np.mean((eta > 0.0).astype(float) != y))
    if isinstance(loss, MultiHinge):
        pred = np.argmax(eta, axis=1) + 1
        return float(np.mean(pred != y))
    return float("nan")


def compute_metrics(model, support, fit, screened, train_std, test_std, loss):
    """The ten-row battery for one fitted method on one replicate."""
    n = train_std.n
    row = {}
    b0_orig, beta_orig = back_transform(fit, train_std)
    if isinstance(loss, MultiHinge):
        row["l1_error"] = float("nan")
        row["l2_error"] = float("nan")
    else:
        dense = np.zeros(train_std.p)
        for j, b in beta_orig.items():
            dense[j] = b
        truth = model.dense_beta(train_std.p)
        diff0 = abs(float(b0_orig[0]) - model.beta0)
        row["l1_error"] = float(diff0 + np.abs(dense - truth).sum())
        row["l2_error"] = float(diff0 ** 2 + ((dense - truth) ** 2).sum())
    row["prop_incl_screen"] = float(np.isin(support, screened).all())
    row["prop_incl_final"] = float(np.isin(support, fit.active).all())
    row["model_size"] = float(fit.active.size)
    eta_tr = _predictor(fit, train_std.x)
    q_train = float(np.mean(loss.value(train_std.y.values, eta_tr)))
    row["q2_train"] = 2.0 * n * q_train
    row["aic"] = row["q2_train"] + 2.0 * fit.active.size
    row["bic"] = row["q2_train"] + math.log(n) * fit.active.size
    eta_te = _predictor(fit, test_std.x)
    q_test = float(np.mean(loss.value(test_std.y.values, eta_te)))
    row["q2_test"] = 2.0 * n * q_test
    row["err01"] = _zero_one_error(loss, test_std.y.values, eta_te)
    row["active"] = [int(j) for j in fit.active]
    row["lambda"] = float(fit.lam) if fit.lam is not None else float("nan")
    return row


def _run_method(method, cfg, pre, loss, penalty, train, tune, rng):
    d = _d_value(cfg, pre)
    rule = _tuning_rule(cfg, pre)
    final_cfg = _solver_cfg(cfg, rule)
    inter_cfg = _solver_cfg(cfg, rule, n_lambda=cfg.intermediate_n_lambda)
    screen_cfg = ScreenConfig(d, schedule=cfg.schedule,
                              conditional=cfg.conditional,
                              max_isis_iter=cfg.max_isis_iter)
    tuning = tune if _TUNING_RULES[rule][0] == "tune" else None
    if method == "van-sis":
        sel = sis_select(train, loss, d)
        fit = fit_penalized(train, loss, sel, penalty, final_cfg,
                            tuning=tuning, rng=rng.spawn(91))
        return fit, sel
    if method == "van-isis":
        runner = isis_no_deletion if cfg.no_deletion else isis
        trace = runner(train, loss, penalty, screen_cfg, inter_cfg,
                       tuning=tuning, rng=rng.spawn(92),
                       final_selection=_TUNING_RULES[rule][0])
        return trace.final_fit, trace.screened_union
    if method == "var1-sis":
        var1_d = pre.var1_d if cfg.d is None and cfg.d_rule is None else d
        res = var1_screen(train, loss, var1_d, rng.spawn(93))
        fit = fit_penalized(train, loss, res.intersection, penalty, final_cfg,
                            tuning=tuning, rng=rng.spawn(94))
        return fit, res.intersection
    if method == "var1-isis":
        trace = var1_isis(train, loss, penalty, screen_cfg, rng.spawn(95),
                          solver_cfg=inter_cfg, tuning=tuning,
                          final_selection=_TUNING_RULES[rule][0])
        return trace.final_fit, trace.screened_union
    if method == "var2-sis":
        res = var2_screen(train, loss, d, rng.spawn(96))
        fit = fit_penalized(train, loss, res.intersection, penalty, final_cfg,
                            tuning=tuning, rng=rng.spawn(97))
        return fit, res.intersection
    if method == "var2-isis":
        trace = var2_isis(train, loss, penalty, screen_cfg, rng.spawn(98),
                          solver_cfg=inter_cfg, tuning=tuning,
                          final_selection=_TUNING_RULES[rule][0])
        return trace.final_fit, trace.screened_union
    # lasso: L1 over every usable column, no screening stage
    usable = train.usable_columns()
    fit = fit_penalized(train, loss, usable, L1(), final_cfg,
                        tuning=tuning, rng=rng.spawn(99))
    return fit, usable


def run_replicate(cfg, rep):
    """All methods on the rep-th draw; returns (rows, elapsed seconds)."""
    t0 = time.monotonic()
    pre = preset(cfg.preset)
    loss = loss_from_string(pre.loss)
    penalty = penalty_from_string(cfg.penalty)
    root = RngSpec(cfg.seed).spawn(rep)
    mult = 100 if cfg.paper_scale else cfg.test_multiplier
    raw_train = gen_dataset(pre.design, pre.model, root.spawn(0))
    raw_tune = gen_dataset(pre.design, pre.model, root.spawn(1))
    test_spec = replace(pre.design, n=pre.design.n * mult)
    raw_test = gen_dataset(test_spec, pre.model, root.spawn(2))
    train = standardize(raw_train)
    tune = _standardize_like(raw_tune, train)
    test = _standardize_like(raw_test, train)
    support = true_support(pre)
    rows = []
    for i, method in enumerate(cfg.methods):
        t1 = time.monotonic()
        row = {"method": method, "replicate": rep}
        try:
            fit, screened = _run_method(method, cfg, pre, loss, penalty,
                                        train, tune, root.spawn(10 + i))
            row.update(compute_metrics(pre.model, support, fit, screened,
                                       train, test, loss))
            row["status"] = "ok"
        except Exception as exc:   # noqa: BLE001 - recorded, not silenced
            row["status"] = f"error: {exc}"
        row["elapsed"] = round(time.monotonic() - t1, 3)
        rows.append(row)
    return rows, time.monotonic() - t0


def _aggregate(cfg, rows, failures):
    summary = {}
    for method in cfg.methods:
        ok = [r for r in rows if r["method"] == method and r["status"] == "ok"]
        agg = {"n_ok": len(ok)}
        for key in METRIC_ROWS:
            vals = np.array([r[key] for r in ok], dtype=float)
            vals = vals[~np.isnan(vals)] if vals.size else vals
            if key.startswith("prop_"):
                agg[key] = float(vals.mean()) if vals.size else float("nan")
            else:
                agg[key] = float(np.median(vals)) if vals.size else float("nan")
        if ok and not math.isnan(ok[0].get("err01", float("nan"))):
            errs = np.array([r["err01"] for r in ok])
            agg["err01_se"] = float(errs.std(ddof=1) / math.sqrt(len(errs))) \
                if len(errs) > 1 else 0.0
        summary[method] = agg
    return summary


def config_hash(cfg):
    payload = json.dumps(asdict(cfg), sort_keys=True, default=str)
    return hashlib.sha256(payload.encode()).hexdigest()[:16]


def run_experiment(cfg):
    """Run every replicate (optionally on a process pool) and aggregate."""
    pre = preset(cfg.preset)    # validate early
    _ = _tuning_rule(cfg, pre)
    workers = cfg.workers
    if workers is None:
        workers = min(os.cpu_count() or 1, cfg.n_replicates)
    reps = range(cfg.n_replicates)
    results = [None] * cfg.n_replicates
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futs = {rep: pool.submit(run_replicate, cfg, rep) for rep in reps}
            for rep in reps:
                results[rep] = futs[rep].result()
    else:
        for rep in reps:
            results[rep] = run_replicate(cfg, rep)
    rows, failures = [], 0
    for rep in reps:
        rep_rows, elapsed = results[rep]
        over = cfg.replicate_budget is not None and elapsed > cfg.replicate_budget
        for row in rep_rows:
            if over and row["status"] == "ok":
                row["status"] = f"error: replicate exceeded {cfg.replicate_budget:g}s budget"
            if row["status"] != "ok":
                failures += 1
            rows.append(row)
    summary = _aggregate(cfg, rows, failures)
    return MetricsReport(asdict(cfg), config_hash(cfg), tuple(cfg.methods),
                         rows, summary, failures)


# ---------------------------------------------------------------------------
# report emission


def _fmt(v):
    if isinstance(v, float):
        return repr(float(v))
    if isinstance(v, list):
        return " ".join(str(x) for x in v)
    return str(v)


def emit_report(report, outdir):
    """Write per-replicate CSV, paper-shaped summary CSV (metric rows by
    method columns), and a JSON summary with the config hash.  Returns the
    three paths."""
    os.makedirs(outdir, exist_ok=True)
    rep_path = os.path.join(outdir, "replicates.csv")
    # wall-clock timings stay out of the CSV so identical configs reproduce
    # it byte for byte
    cols = ["method", "replicate", "status", "lambda", "active"]
    cols[3:3] = list(METRIC_ROWS)
    with open(rep_path, "w") as fh:
        fh.write(",".join(cols) + "\n")
        for row in report.rows:
            cells = []
            for c in cols:
                v = row.get(c, "")
                cells.append(_fmt(v) if not isinstance(v, str) else v.replace(",", ";"))
            fh.write(",".join(cells) + "\n")
    sum_path = os.path.join(outdir, "summary.csv")
    with open(sum_path, "w") as fh:
        fh.write("metric," + ",".join(report.methods) + "\n")
        keys = list(METRIC_ROWS) + ["err01_se", "n_ok"]
        for key in keys:
            cells = [key]
            for method in report.methods:
                v = report.summary[method].get(key, float("nan"))
                cells.append(_fmt(v))
            fh.write(",".join(cells) + "\n")
    json_path = os.path.join(outdir, "summary.json")
    with open(json_path, "w") as fh:
        json.dump({"config": report.config, "config_hash": report.config_hash,
                   "failures": report.failures, "summary": report.summary,
                   "replicates": report.rows}, fh, indent=1, default=str)
    return rep_path, sum_path, json_path
