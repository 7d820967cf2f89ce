"""Marginal-utility ranking and the iterated screening loop.

The iterated procedure alternates a conditional-utility recruitment scan
with a penalized prune over the union of the current model and the recruits.
The prune may delete previously selected columns; termination is on a
repeated model, on reaching the size cap, or on the iteration cap.
"""

import warnings
from dataclasses import dataclass, field, replace

import numpy as np

from .solver import (ScreenlabWarning, SolverConfig, conditional_utilities,
                     conditional_residual_utilities, fit_penalized,
                     fit_unpenalized, marginal_utilities)

SCHEDULES = ("two-thirds-first", "capped-five")
CONDITIONAL_MODES = ("joint", "residual")


@dataclass
class ScreenConfig:
    """Recruitment schedule for iterated screening.

    d is the model-size cap; the first recruitment takes floor(2d/3)
    columns, later ones either top up to d ("two-thirds-first") or add at
    most five at a time ("capped-five").
    """

    d: int
    schedule: str = "two-thirds-first"
    conditional: str = "joint"
    max_isis_iter: int = 10

    def __post_init__(self):
        if self.d < 1:
            raise ValueError("d must be at least 1")
        if self.schedule not in SCHEDULES:
            raise ValueError(f"unknown schedule {self.schedule!r}")
        if self.conditional not in CONDITIONAL_MODES:
            raise ValueError(f"unknown conditional mode {self.conditional!r}")
        if self.k1 < 1:
            raise ValueError("d too small for the two-thirds first step")

    @property
    def k1(self):
        return max(self.d * 2 // 3, 1)

    def k_r(self, model_size):
        room = self.d - model_size
        if self.schedule == "capped-five":
            return min(5, room)
        return room


@dataclass
class IterationRecord:
    r: int
    k: int
    recruited: np.ndarray
    utilities: np.ndarray       # utilities of the recruited columns
    model: np.ndarray           # retained set after the prune
    fit: object


@dataclass
class ScreenTrace:
    iterations: list
    reason: str                 # "size" | "fixed-point" | "max-iter"
    final_model: np.ndarray
    final_fit: object
    config: ScreenConfig = None

    @property
    def screened_union(self):
        """Union of every recruited set (the screening-stage pool)."""
        sets = [rec.recruited for rec in self.iterations]
        if not sets:
            return np.array([], dtype=int)
        return np.unique(np.concatenate(sets))


def sis_rank(dataset, loss):
    """All non-constant columns ordered by marginal utility, best first.

    Returns (ordered column positions, utilities in that order).  Ties break
    toward the lower position.  Expects standardized predictors; utilities
    are scale-sensitive otherwise.
    """
    if not dataset.standardized:
        warnings.warn("ranking unstandardized predictors; utilities are "
                      "scale-sensitive", ScreenlabWarning, stacklevel=2)
    cols, utils = marginal_utilities(dataset, loss)
    order = np.argsort(utils, kind="stable")
    return cols[order], utils[order]


def sis_select(dataset, loss, size):
    """Positions of the `size` smallest marginal utilities."""
    ranked, _ = sis_rank(dataset, loss)
    if size > ranked.size:
        warnings.warn(f"requested {size} columns but only {ranked.size} are "
                      "usable; returning all", ScreenlabWarning, stacklevel=2)
        size = ranked.size
    return np.sort(ranked[:size])


def _scan(dataset, loss, model, fit, pool, mode):
    if mode == "joint" and model.size:
        return conditional_utilities(dataset, loss, model, pool)
    if model.size:
        return conditional_residual_utilities(dataset, loss, fit, pool)
    return marginal_utilities(dataset, loss, pool)


def _recruit(pool, utils, k):
    order = np.argsort(utils, kind="stable")[:k]
    return pool[order], utils[order]


def isis(dataset, loss, penalty, screen_cfg, solver_cfg=None, tuning=None,
         rng=None, final_selection=None):
    """Iterated screening with deletion (the default variant).

    Iteration 1 recruits the k1 best marginal utilities and prunes them with
    a penalized fit; iteration r recruits the k_r best conditional utilities
    among columns outside the current model, then prunes the union.
    Intermediate prunes select lambda by BIC; the final refit over the
    terminal model uses final_selection (default: solver_cfg.selection).
    """
    solver_cfg = solver_cfg or SolverConfig()
    loss.validate_response(dataset.y)
    usable = dataset.usable_columns()
    cfg_bic = replace(solver_cfg, selection="bic")
    records = []
    model = np.array([], dtype=int)
    fit = None
    history = set()
    reason = "max-iter"
    for r in range(1, screen_cfg.max_isis_iter + 1):
        k = screen_cfg.k1 if r == 1 else screen_cfg.k_r(model.size)
        pool = np.setdiff1d(usable, model, assume_unique=False)
        k = min(k, pool.size)
        if k <= 0:
            reason = "size"
            break
        cols, utils = _scan(dataset, loss, model, fit,
                            pool, screen_cfg.conditional)
        recruited, rec_utils = _recruit(cols, utils, k)
        candidates = np.union1d(model, recruited)
        fit = fit_penalized(dataset, loss, candidates, penalty, cfg_bic)
        model = fit.active
        records.append(IterationRecord(r, k, recruited, rec_utils, model, fit))
        key = tuple(model.tolist())
        if key in history:
            reason = "fixed-point"
            break
        history.add(key)
        if model.size >= screen_cfg.d:
            reason = "size"
            break
    final_cfg = solver_cfg if final_selection is None \
        else replace(solver_cfg, selection=final_selection)
    final_fit = fit_penalized(dataset, loss, model, penalty, final_cfg,
                              tuning=tuning, rng=rng)
    return ScreenTrace(records, reason, final_fit.active, final_fit,
                       config=screen_cfg)


def isis_no_deletion(dataset, loss, penalty, screen_cfg, solver_cfg=None,
                     tuning=None, rng=None, final_selection=None):
    """Classical iterated screening baseline: residual-substitute scans,
    stage fits over the new recruits only, and a monotone model set.

    Residuals come from an unpenalized joint refit of the accumulated model,
    matching the original recipe of fitting the recruited variables and
    working with those residuals.
    """
    solver_cfg = solver_cfg or SolverConfig()
    loss.validate_response(dataset.y)
    usable = dataset.usable_columns()
    cfg_bic = replace(solver_cfg, selection="bic")
    records = []
    model = np.array([], dtype=int)
    refit = None
    reason = "max-iter"
    for r in range(1, screen_cfg.max_isis_iter + 1):
        k = screen_cfg.k1 if r == 1 else screen_cfg.k_r(model.size)
        pool = np.setdiff1d(usable, model, assume_unique=False)
        k = min(k, pool.size)
        if k <= 0:
            reason = "size"
            break
        if model.size:
            cols, utils = conditional_residual_utilities(dataset, loss,
                                                         refit, pool)
        else:
            cols, utils = marginal_utilities(dataset, loss, pool)
        recruited, rec_utils = _recruit(cols, utils, k)
        stage = fit_penalized(dataset, loss, recruited, penalty, cfg_bic)
        new_model = np.union1d(model, stage.active)
        records.append(IterationRecord(r, k, recruited, rec_utils,
                                       new_model, stage))
        if r > 1 and new_model.size == model.size:
            model = new_model
            reason = "fixed-point"
            break
        model = new_model
        refit = fit_unpenalized(dataset, loss, model)
        if model.size >= screen_cfg.d:
            reason = "size"
            break
    final_cfg = solver_cfg if final_selection is None \
        else replace(solver_cfg, selection=final_selection)
    final_fit = fit_penalized(dataset, loss, model, penalty, final_cfg,
                              tuning=tuning, rng=rng)
    return ScreenTrace(records, reason, final_fit.active, final_fit,
                       config=screen_cfg)
