import numpy as np
import pytest
from sklearn.base import clone
from sklearn.linear_model import LogisticRegression
from sklearn.pipeline import Pipeline

from screenlab.estimators import ISISScreener, PenalizedModel, SISScreener


def _regression_data(seed=0, n=120, p=30):
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((n, p))
    beta = np.zeros(p)
    beta[:3] = [3.0, -2.5, 2.0]
    y = x @ beta + 0.5 * rng.standard_normal(n)
    return x, y


def _binary_data(seed=0, n=200, p=25):
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((n, p))
    eta = 2.0 * x[:, 0] - 1.5 * x[:, 1]
    y = (rng.random(n) < 1 / (1 + np.exp(-eta))).astype(float)
    return x, y


class TestSISScreener:
    def test_fit_transform_shapes(self):
        x, y = _regression_data()
        sel = SISScreener(d=5).fit(x, y)
        assert sel.transform(x).shape == (120, 5)
        assert sel.get_support().sum() == 5
        assert set(sel.get_support(indices=True)) >= {0, 1, 2}

    def test_default_d_rule(self):
        x, y = _regression_data()
        sel = SISScreener().fit(x, y)
        assert sel.get_support().sum() == int(120 / np.log(120))

    def test_get_set_params_clone(self):
        sel = SISScreener(loss="logistic", d=7)
        params = sel.get_params()
        assert params["loss"] == "logistic" and params["d"] == 7
        other = clone(sel).set_params(d=3)
        assert other.d == 3 and sel.d == 7

    def test_pipeline_composition(self):
        x, y = _binary_data()
        pipe = Pipeline([
            ("screen", SISScreener(loss="logistic", d=4)),
            ("clf", LogisticRegression(max_iter=200)),
        ])
        pipe.fit(x, y)
        acc = pipe.score(x, y)
        assert acc > 0.7

    def test_ranking_attributes(self):
        x, y = _regression_data()
        sel = SISScreener(d=4).fit(x, y)
        assert sel.ranking_.shape == (30,)
        assert sel.utilities_[0] <= sel.utilities_[-1]


class TestISISScreener:
    def test_selects_support(self):
        x, y = _regression_data(1)
        sel = ISISScreener(d=8, n_lambda=25).fit(x, y)
        assert set(sel.get_support(indices=True)) >= {0, 1, 2}
        assert sel.trace_.reason in ("size", "fixed-point", "max-iter")

    def test_no_deletion_variant(self):
        x, y = _regression_data(2)
        sel = ISISScreener(d=8, deletion=False, n_lambda=25).fit(x, y)
        assert set(sel.get_support(indices=True)) >= {0, 1, 2}

    def test_split_variants(self):
        x, y = _regression_data(3, n=150)
        for variant in ("var1", "var2"):
            sel = ISISScreener(d=6, variant=variant, n_lambda=20,
                               random_state=4).fit(x, y)
            assert sel.support_mask_.shape == (30,)

    def test_transform_round_trip(self):
        x, y = _regression_data(4)
        sel = ISISScreener(d=8, n_lambda=20).fit(x, y)
        kept = sel.transform(x)
        assert kept.shape[1] == sel.get_support().sum()


class TestPenalizedModel:
    def test_regression_predict(self):
        x, y = _regression_data(5)
        model = PenalizedModel(n_lambda=25).fit(x, y)
        pred = model.predict(x)
        assert np.corrcoef(pred, y)[0, 1] > 0.9
        assert set(model.active_) >= {0, 1, 2}
        assert model.coef_.shape == (30,)

    def test_logistic_predict_proba(self):
        x, y = _binary_data(6)
        model = PenalizedModel(loss="logistic", n_lambda=25).fit(x, y)
        proba = model.predict_proba(x)
        assert proba.shape == (200, 2)
        np.testing.assert_allclose(proba.sum(axis=1), 1.0, atol=1e-12)
        assert ((model.predict(x) == 1) == (proba[:, 1] > 0.5)).all()

    def test_poisson_predict_positive(self):
        rng = np.random.default_rng(7)
        x = rng.standard_normal((150, 10))
        y = rng.poisson(np.exp(1.0 + 0.8 * x[:, 0]))
        model = PenalizedModel(loss="poisson", n_lambda=25).fit(x, y)
        assert (model.predict(x) > 0).all()

    def test_multiclass_labels(self):
        rng = np.random.default_rng(8)
        n = 240
        lab = rng.integers(1, 4, n)
        x = rng.standard_normal((n, 8))
        x[:, 0] += 1.5 * (lab == 1)
        x[:, 1] += 1.5 * (lab == 2)
        model = PenalizedModel(loss="multihinge:3", n_lambda=15).fit(x, lab)
        pred = model.predict(x)
        assert set(np.unique(pred)) <= {1, 2, 3}
        assert (pred == lab).mean() > 0.5
        with pytest.raises(AttributeError):
            model.predict_proba(x)

    def test_original_scale_coefficients(self):
        rng = np.random.default_rng(9)
        x = rng.standard_normal((200, 5)) * np.array([1, 10, 0.1, 1, 1])
        y = 2.0 + 3.0 * x[:, 1] + rng.standard_normal(200)
        model = PenalizedModel(n_lambda=25).fit(x, y)
        assert model.coef_[1] == pytest.approx(3.0, abs=0.1)
        assert model.intercept_ == pytest.approx(2.0, abs=0.3)
