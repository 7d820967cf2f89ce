import json
import math
from dataclasses import replace

import numpy as np
import pytest

from screenlab.data import Dataset, Response, RngSpec, standardize
from screenlab.harness import (ExperimentConfig, back_transform,
                               compute_metrics, config_hash, emit_report,
                               run_experiment, run_replicate)
from screenlab.losses import Logistic, Quadratic
from screenlab.simgen import ModelSpec, preset
from screenlab.solver import FitResult


FAST = dict(preset="linear-case3", methods=("van-sis",), n_replicates=2,
            seed=3, workers=1, n_lambda=15, intermediate_n_lambda=10,
            test_multiplier=2)


def _std_pair(seed=0, n=60, p=5):
    rng = np.random.default_rng(seed)
    beta = np.zeros(p)
    beta[0], beta[2] = 1.5, -2.0
    x = rng.standard_normal((n, p))
    y = 0.5 + x @ beta + 0.3 * rng.standard_normal(n)
    train = standardize(Dataset(x, Response.real(y)))
    xt = rng.standard_normal((4 * n, p))
    yt = 0.5 + xt @ beta + 0.3 * rng.standard_normal(4 * n)
    test_raw = Dataset(xt, Response.real(yt))
    test = replace(test_raw, x=(xt - train.column_means) / train.column_sds,
                   standardized=True, column_means=train.column_means,
                   column_sds=train.column_sds)
    model = ModelSpec("linear", 0.5, {0: 1.5, 2: -2.0})
    return train, test, model


class TestComputeMetrics:
    def test_perfect_fit_has_zero_errors(self):
        train, test, model = _std_pair()
        # express the true coefficients on the standardized scale
        beta_std = {j: b * train.column_sds[j] for j, b in model.beta.items()}
        b0_std = model.beta0 + sum(model.beta[j] * train.column_means[j]
                                   for j in model.beta)
        fit = FitResult(np.array([b0_std]), beta_std,
                        np.array(sorted(beta_std)), 0.0, lam=0.1)
        row = compute_metrics(model, np.array([0, 2]), fit, np.array([0, 2]),
                              train, test, Quadratic())
        assert row["l1_error"] == pytest.approx(0.0, abs=1e-10)
        assert row["l2_error"] == pytest.approx(0.0, abs=1e-10)
        assert row["prop_incl_final"] == 1.0

    def test_aic_bic_identity(self):
        train, test, model = _std_pair(1)
        fit = FitResult(np.array([0.1]), {0: 0.5}, np.array([0]), 0.0, lam=0.1)
        row = compute_metrics(model, np.array([0]), fit, np.array([0]),
                              train, test, Quadratic())
        want = (2 - math.log(train.n)) * fit.active.size
        assert row["aic"] - row["bic"] == pytest.approx(want, abs=1e-10)

    def test_intercept_only_majority_rule(self):
        rng = np.random.default_rng(2)
        n, ratio = 300, 0.6
        y = (rng.random(n) < ratio).astype(float)
        x = rng.standard_normal((n, 2))
        train = standardize(Dataset(x, Response.binary(y)))
        yt = (rng.random(2000) < ratio).astype(float)
        test = replace(Dataset(rng.standard_normal((2000, 2)),
                               Response.binary(yt)),
                       standardized=True)
        pbar = y.mean()
        fit = FitResult(np.array([math.log(pbar / (1 - pbar))]), {},
                        np.array([], dtype=int), 0.0)
        model = ModelSpec("logistic", 0.0, {})
        row = compute_metrics(model, np.array([], dtype=int), fit,
                              np.array([], dtype=int), train, test, Logistic())
        assert row["err01"] == pytest.approx(min(yt.mean(), 1 - yt.mean()),
                                             abs=0.03)

    def test_inclusion_monotone(self):
        train, test, model = _std_pair(3)
        fit = FitResult(np.array([0.0]), {0: 1.0}, np.array([0]), 0.0)
        row = compute_metrics(model, np.array([0, 2]), fit, np.array([0, 2]),
                              train, test, Quadratic())
        assert row["prop_incl_final"] <= row["prop_incl_screen"]


class TestBackTransform:
    def test_round_trip_predictions(self):
        train, test, _ = _std_pair(4)
        fit = FitResult(np.array([0.3]), {0: 1.2, 3: -0.4},
                        np.array([0, 3]), 0.0)
        b0, beta = back_transform(fit, train)
        # original-scale prediction equals standardized-scale prediction
        raw_x = train.x * train.column_sds + train.column_means
        eta_std = fit.intercepts[0] + train.x[:, [0, 3]] @ np.array([1.2, -0.4])
        eta_orig = b0[0] + raw_x[:, [0, 3]] @ np.array([beta[0], beta[3]])
        np.testing.assert_allclose(eta_orig, eta_std, atol=1e-10)


class TestRunExperiment:
    def test_deterministic_reports(self, tmp_path):
        cfg = ExperimentConfig(**FAST)
        r1 = run_experiment(cfg)
        r2 = run_experiment(cfg)
        p1 = emit_report(r1, tmp_path / "a")
        p2 = emit_report(r2, tmp_path / "b")
        assert (tmp_path / "a" / "replicates.csv").read_bytes() == \
               (tmp_path / "b" / "replicates.csv").read_bytes()
        assert r1.config_hash == r2.config_hash

    def test_workers_do_not_change_results(self, tmp_path):
        r1 = run_experiment(ExperimentConfig(**{**FAST, "workers": 1}))
        r2 = run_experiment(ExperimentConfig(**{**FAST, "workers": 2}))
        for a, b in zip(r1.rows, r2.rows):
            for key in ("model_size", "l1_error", "q2_test"):
                assert a[key] == b[key]

    def test_median_matches_sorted_reference(self):
        rep = run_experiment(ExperimentConfig(**{**FAST, "n_replicates": 3}))
        vals = sorted(r["model_size"] for r in rep.rows
                      if r["method"] == "van-sis")
        k = len(vals)
        want = vals[k // 2] if k % 2 else 0.5 * (vals[k // 2 - 1] + vals[k // 2])
        assert rep.summary["van-sis"]["model_size"] == pytest.approx(want)

    def test_final_inclusion_never_exceeds_screen(self):
        rep = run_experiment(ExperimentConfig(**{**FAST, "methods":
                                                 ("van-sis", "van-isis")}))
        for row in rep.rows:
            assert row["prop_incl_final"] <= row["prop_incl_screen"]

    def test_bad_method_rejected(self):
        with pytest.raises(ValueError, match="unknown methods"):
            ExperimentConfig(preset="null", methods=("van-sis", "warp"))

    def test_replicate_budget_accounting(self):
        cfg = ExperimentConfig(**{**FAST, "replicate_budget": 1e-9})
        rep = run_experiment(cfg)
        assert rep.failures == len(rep.rows)
        assert all("budget" in r["status"] for r in rep.rows)


class TestEmitReport:
    def test_round_trip_json(self, tmp_path):
        rep = run_experiment(ExperimentConfig(**FAST))
        _, _, jpath = emit_report(rep, tmp_path)
        loaded = json.loads(open(jpath).read())
        assert loaded["config_hash"] == rep.config_hash
        for method, agg in rep.summary.items():
            for key, val in agg.items():
                got = loaded["summary"][method][key]
                if isinstance(val, float) and math.isnan(val):
                    assert got is None or math.isnan(float(got))
                else:
                    assert got == val

    def test_summary_has_method_columns(self, tmp_path):
        rep = run_experiment(ExperimentConfig(**{**FAST, "methods":
                                                 ("van-sis", "lasso")}))
        _, spath, _ = emit_report(rep, tmp_path)
        header = open(spath).readline().strip().split(",")
        assert header == ["metric", "van-sis", "lasso"]

    def test_config_hash_changes_per_field(self):
        base = ExperimentConfig(**FAST)
        h0 = config_hash(base)
        flips = dict(preset="logistic-case1", methods=("lasso",),
                     n_replicates=3, seed=4, d=9, tuning="bic",
                     penalty="mcp", test_multiplier=3, paper_scale=True,
                     n_lambda=16, schedule="capped-five",
                     conditional="residual", max_isis_iter=9)
        for field, val in flips.items():
            other = replace(base, **{field: val})
            assert config_hash(other) != h0, field


class TestRunReplicate:
    def test_row_fields(self):
        rows, elapsed = run_replicate(ExperimentConfig(**FAST), 0)
        assert elapsed > 0
        row = rows[0]
        assert row["method"] == "van-sis" and row["status"] == "ok"
        for key in ("l1_error", "model_size", "q2_train", "q2_test",
                    "active", "lambda"):
            assert key in row

    def test_failure_recorded_not_raised(self, monkeypatch):
        import screenlab.harness as hmod

        def boom(*a, **k):
            raise RuntimeError("synthetic failure")
        monkeypatch.setattr(hmod, "sis_select", boom)
        rows, _ = run_replicate(ExperimentConfig(**FAST), 0)
        assert rows[0]["status"].startswith("error: synthetic")
