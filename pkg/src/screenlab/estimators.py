"""scikit-learn style wrappers so screening composes with pipelines.

SISScreener / ISISScreener are SelectorMixin transformers (fit on X, y;
transform keeps the selected columns).  PenalizedModel exposes the sparse
penalized fit with predict / predict_proba / decision_function.
"""

import math

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.feature_selection import SelectorMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .data import Dataset, Response, RngSpec, standardize
from .losses import MultiHinge, loss_from_string
from .penalties import penalty_from_string
from .screening import ScreenConfig, isis, isis_no_deletion, sis_rank
from .solver import SolverConfig, fit_penalized
from .variants import var1_isis, var2_isis
from .harness import back_transform, _predictor


def _make_response(y, loss):
    y = np.asarray(y)
    if loss.name == "logistic":
        return Response.binary(y)
    if loss.name == "poisson":
        return Response.count(y)
    if isinstance(loss, MultiHinge):
        return Response.class_label(y, loss.n_classes)
    return Response.real(y)


def _prepare(X, y, loss, do_standardize):
    ds = Dataset(X, _make_response(y, loss))
    return standardize(ds) if do_standardize else ds


def _default_d(n):
    return max(1, int(n / math.log(n)))


class SISScreener(SelectorMixin, BaseEstimator):
    """Feature selection by marginal utility ranking.

    Parameters
    ----------
    loss : loss config string ("quadratic", "logistic", "poisson", "lad",
        "huber[:delta]", "multihinge:K").
    d : number of features to keep; default floor(n / log n) at fit time.
    standardize : center/scale columns before ranking (recommended).
    """

    def __init__(self, loss="quadratic", d=None, standardize=True):
        self.loss = loss
        self.d = d
        self.standardize = standardize

    def fit(self, X, y):
        X, y = check_X_y(X, np.asarray(y), y_numeric=False)
        loss = loss_from_string(self.loss)
        ds = _prepare(X, y, loss, self.standardize)
        ranked, utils = sis_rank(ds, loss)
        d = self.d if self.d is not None else _default_d(ds.n)
        d = min(d, ranked.size)
        self.n_features_in_ = ds.p
        self.ranking_ = ranked
        self.utilities_ = utils
        mask = np.zeros(ds.p, dtype=bool)
        mask[ranked[:d]] = True
        self.support_mask_ = mask
        return self

    def _get_support_mask(self):
        check_is_fitted(self, "support_mask_")
        return self.support_mask_


class ISISScreener(SelectorMixin, BaseEstimator):
    """Iterated screening with penalized pruning, as a feature selector.

    variant=None runs the plain iterated screen; "var1" / "var2" run the
    sample-splitting forms (random_state seeds the split).  deletion=False
    swaps in the classical no-deletion baseline.
    """

    def __init__(self, loss="quadratic", penalty="scad", d=None,
                 schedule="two-thirds-first", conditional="joint",
                 deletion=True, variant=None, lambda_selection="bic",
                 cv_folds=5, n_lambda=100, lambda_ratio=1e-3,
                 max_isis_iter=10, standardize=True, random_state=0):
        self.loss = loss
        self.penalty = penalty
        self.d = d
        self.schedule = schedule
        self.conditional = conditional
        self.deletion = deletion
        self.variant = variant
        self.lambda_selection = lambda_selection
        self.cv_folds = cv_folds
        self.n_lambda = n_lambda
        self.lambda_ratio = lambda_ratio
        self.max_isis_iter = max_isis_iter
        self.standardize = standardize
        self.random_state = random_state

    def fit(self, X, y):
        X, y = check_X_y(X, np.asarray(y), y_numeric=False)
        loss = loss_from_string(self.loss)
        pen = penalty_from_string(self.penalty)
        ds = _prepare(X, y, loss, self.standardize)
        d = self.d if self.d is not None else _default_d(ds.n)
        screen_cfg = ScreenConfig(d, schedule=self.schedule,
                                  conditional=self.conditional,
                                  max_isis_iter=self.max_isis_iter)
        solver_cfg = SolverConfig(selection=self.lambda_selection,
                                  cv_folds=self.cv_folds,
                                  n_lambda=self.n_lambda,
                                  lambda_ratio=self.lambda_ratio)
        rng = RngSpec(self.random_state or 0)
        if self.variant == "var1":
            trace = var1_isis(ds, loss, pen, screen_cfg, rng,
                              solver_cfg=solver_cfg)
        elif self.variant == "var2":
            trace = var2_isis(ds, loss, pen, screen_cfg, rng,
                              solver_cfg=solver_cfg)
        elif self.deletion:
            trace = isis(ds, loss, pen, screen_cfg, solver_cfg, rng=rng)
        else:
            trace = isis_no_deletion(ds, loss, pen, screen_cfg, solver_cfg,
                                     rng=rng)
        self.n_features_in_ = ds.p
        self.trace_ = trace
        self.fit_result_ = trace.final_fit
        mask = np.zeros(ds.p, dtype=bool)
        mask[trace.final_model] = True
        self.support_mask_ = mask
        return self

    def _get_support_mask(self):
        check_is_fitted(self, "support_mask_")
        return self.support_mask_


class PenalizedModel(BaseEstimator):
    """Sparse penalized pseudo-likelihood fit with a predict surface.

    predict returns the linear predictor for regression-type losses, class
    labels {0,1} for "logistic", the exponentiated mean for "poisson", and
    argmax class labels 1..K for "multihinge:K".
    """

    def __init__(self, loss="quadratic", penalty="scad",
                 lambda_selection="bic", cv_folds=5, n_lambda=100,
                 lambda_ratio=1e-3, standardize=True, random_state=0):
        self.loss = loss
        self.penalty = penalty
        self.lambda_selection = lambda_selection
        self.cv_folds = cv_folds
        self.n_lambda = n_lambda
        self.lambda_ratio = lambda_ratio
        self.standardize = standardize
        self.random_state = random_state

    def fit(self, X, y):
        X, y = check_X_y(X, np.asarray(y), y_numeric=False)
        loss = loss_from_string(self.loss)
        pen = penalty_from_string(self.penalty)
        ds = _prepare(X, y, loss, self.standardize)
        cfg = SolverConfig(selection=self.lambda_selection,
                           cv_folds=self.cv_folds, n_lambda=self.n_lambda,
                           lambda_ratio=self.lambda_ratio)
        fit = fit_penalized(ds, loss, ds.usable_columns(), pen, cfg,
                            rng=RngSpec(self.random_state or 0))
        self.n_features_in_ = ds.p
        self.fit_result_ = fit
        b0, beta = back_transform(fit, ds)
        self.intercept_ = b0 if b0.size > 1 else float(b0[0])
        coef = np.zeros(ds.p) if b0.size == 1 else np.zeros((ds.p, b0.size))
        for j, b in beta.items():
            coef[j] = b
        self.coef_ = coef
        self.active_ = fit.active
        self.lambda_ = fit.lam
        self._loss = loss
        return self

    def decision_function(self, X):
        check_is_fitted(self, "coef_")
        X = check_array(X)
        if self.coef_.ndim == 1:
            return self.intercept_ + X @ self.coef_
        return np.asarray(self.intercept_)[None, :] + X @ self.coef_

    def predict(self, X):
        eta = self.decision_function(X)
        if self._loss.name == "logistic":
            return (eta > 0).astype(float)
        if self._loss.name == "poisson":
            return np.exp(eta)
        if isinstance(self._loss, MultiHinge):
            return np.argmax(eta, axis=1) + 1
        return eta

    def predict_proba(self, X):
        if self._loss.name != "logistic":
            raise AttributeError("predict_proba is defined for the logistic loss")
        eta = self.decision_function(X)
        p = 1.0 / (1.0 + np.exp(-eta))
        return np.column_stack([1.0 - p, p])
