"""Sample-splitting screening variants and the false-positive bound.

Variant 1 screens each half at a fixed size and intersects (aggressive; the
combinatorial bound below controls false positives under exchangeability).
Variant 2 inflates the per-half size until the intersection reaches the
requested size (conservative).  Iterated forms run the conditional scan per
half, conditioning on the shared full-sample model, and prune on the full
sample.
"""

import math
from dataclasses import dataclass, replace

import numpy as np

from .data import split_groups, split_half
from .screening import (IterationRecord, ScreenTrace, _recruit, _scan,
                        sis_rank, sis_select)
from .solver import SolverConfig, fit_penalized, marginal_utilities


@dataclass
class SplitScreenResult:
    half_sets: list            # per-group selected positions
    intersection: np.ndarray
    variant: str               # "var1" | "var2"
    iterated: bool = False
    per_half_size: int = 0
    empty: bool = False


@dataclass
class Theorem1Bound:
    """P(at least r false positives) bounds for the intersect variant."""

    exact: float
    loose: float
    side_condition: bool       # d^2 <= p - s, needed for the loose form
    vacuous: bool = False


def theorem1_bound(d_sel, p, s, r):
    """Exact binomial-ratio bound C(d,r)^2 / C(p-s, r) and its 1/r! loose
    form, both clamped to [0, 1].  Vacuous (bound 1) when d_sel > p - s."""
    if r < 1 or r > d_sel:
        raise ValueError("need 1 <= r <= d_sel")
    free = p - s
    if free < 1 or d_sel > free:
        return Theorem1Bound(1.0, 1.0, False, vacuous=True)
    exact = math.comb(d_sel, r) ** 2 / math.comb(free, r)
    loose = (d_sel * d_sel / free) ** r / math.factorial(r)
    return Theorem1Bound(min(exact, 1.0), min(loose, 1.0),
                         d_sel * d_sel <= free)


def var1_screen(dataset, loss, size_per_half, rng, k_groups=2):
    """Screen each random group at size_per_half and intersect.

    k_groups=2 is the standard split; larger values are even more
    aggressive.  An empty intersection is a valid (flagged) result.
    """
    if size_per_half > dataset.p:
        raise ValueError("size_per_half exceeds the number of columns")
    if k_groups == 2:
        groups = split_half(dataset.n, rng)
    else:
        groups = split_groups(dataset.n, k_groups, rng)
    sets = [sis_select(dataset.subset_rows(g), loss, size_per_half)
            for g in groups]
    inter = sets[0]
    for s in sets[1:]:
        inter = np.intersect1d(inter, s)
    return SplitScreenResult(sets, inter, "var1",
                             per_half_size=size_per_half,
                             empty=inter.size == 0)


def var2_screen(dataset, loss, target_d, rng):
    """Equal-size split screening: the smallest per-half size whose top sets
    intersect in at least target_d columns, truncated back to target_d by
    within-half rank sum (ties toward the lower position)."""
    if target_d > dataset.p:
        raise ValueError("target_d exceeds the number of columns")
    rows1, rows2 = split_half(dataset.n, rng)
    r1, _ = sis_rank(dataset.subset_rows(rows1), loss)
    r2, _ = sis_rank(dataset.subset_rows(rows2), loss)
    target = min(target_d, r1.size)
    # rank position of each column in each half's ordering
    rank1 = np.empty(dataset.p, dtype=int)
    rank2 = np.empty(dataset.p, dtype=int)
    rank1.fill(dataset.p)
    rank2.fill(dataset.p)
    rank1[r1] = np.arange(r1.size)
    rank2[r2] = np.arange(r2.size)
    worse = np.maximum(rank1, rank2)
    mstar = int(np.partition(worse, target - 1)[target - 1]) + 1
    members = np.flatnonzero(worse < mstar)
    if members.size > target:
        ranksum = rank1[members] + rank2[members]
        order = np.lexsort((members, ranksum))
        members = np.sort(members[order[:target]])
    half1 = np.sort(r1[:mstar])
    half2 = np.sort(r2[:mstar])
    return SplitScreenResult([half1, half2], members, "var2",
                             per_half_size=mstar)


def _half_datasets(dataset, rng, k_groups=2):
    if k_groups == 2:
        groups = split_half(dataset.n, rng)
    else:
        groups = split_groups(dataset.n, k_groups, rng)
    return [dataset.subset_rows(g) for g in groups]


def var1_isis(dataset, loss, penalty, screen_cfg, rng, solver_cfg=None,
              tuning=None, k_groups=2, final_selection=None):
    """Iterated intersect variant: per-iteration recruitment runs the
    conditional scan separately on each half (conditioning on the shared
    full-sample model), intersects the per-half recruit sets of size k_r,
    and prunes the union on the full sample.  Stops like the plain iterated
    screen, or after two consecutive empty recruitments."""
    solver_cfg = solver_cfg or SolverConfig()
    loss.validate_response(dataset.y)
    halves = _half_datasets(dataset, rng, k_groups)
    usable = dataset.usable_columns()
    cfg_bic = replace(solver_cfg, selection="bic")
    records = []
    model = np.array([], dtype=int)
    fit = None
    history = set()
    reason = "max-iter"
    empty_streak = 0
    for r in range(1, screen_cfg.max_isis_iter + 1):
        k = screen_cfg.k1 if r == 1 else screen_cfg.k_r(model.size)
        pool = np.setdiff1d(usable, model, assume_unique=False)
        k = min(k, pool.size)
        if k <= 0:
            reason = "size"
            break
        recruit = None
        for half in halves:
            cols, utils = _scan(half, loss, model, fit, pool,
                                screen_cfg.conditional)
            sel, _ = _recruit(cols, utils, k)
            recruit = sel if recruit is None else np.intersect1d(recruit, sel)
        recruited = np.sort(recruit)
        if recruited.size == 0:
            empty_streak += 1
            records.append(IterationRecord(r, k, recruited,
                                           np.array([]), model, fit))
            if empty_streak >= 2:
                reason = "fixed-point"
                break
            continue
        empty_streak = 0
        candidates = np.union1d(model, recruited)
        fit = fit_penalized(dataset, loss, candidates, penalty, cfg_bic)
        model = fit.active
        records.append(IterationRecord(r, k, recruited, np.array([]),
                                       model, fit))
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
    trace = ScreenTrace(records, reason, final_fit.active, final_fit,
                        config=screen_cfg)
    return trace


def _var2_recruit(halves, loss, model, fit, pool, k, mode):
    """Equal-size inflated recruitment: smallest per-half size whose top
    conditional sets intersect in >= k columns, truncated by rank sum."""
    ranks = []
    for half in halves:
        cols, utils = _scan(half, loss, model, fit, pool, mode)
        order = np.argsort(utils, kind="stable")
        rank = np.full(int(pool.max()) + 1 if pool.size else 1, pool.size,
                       dtype=int)
        rank[cols[order]] = np.arange(cols.size)
        ranks.append(rank)
    worse = np.maximum(ranks[0][pool], ranks[1][pool])
    k = min(k, pool.size)
    mstar = int(np.partition(worse, k - 1)[k - 1]) + 1
    members = pool[worse < mstar]
    if members.size > k:
        ranksum = ranks[0][members] + ranks[1][members]
        order = np.lexsort((members, ranksum))
        members = np.sort(members[order[:k]])
    return np.sort(members)


def var2_isis(dataset, loss, penalty, screen_cfg, rng, solver_cfg=None,
              tuning=None, final_selection=None, prune="union"):
    """Iterated equal-size variant: recruit exactly k_r intersected columns
    per iteration via size inflation on the two halves, then prune.

    prune="union" (default) prunes over model | recruits; prune="intersect"
    follows the stated composition literally, which empties the pool since
    recruits are drawn outside the model, and is kept only for comparison.
    """
    solver_cfg = solver_cfg or SolverConfig()
    if prune not in ("union", "intersect"):
        raise ValueError("prune must be 'union' or 'intersect'")
    loss.validate_response(dataset.y)
    halves = _half_datasets(dataset, rng, 2)
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
        recruited = _var2_recruit(halves, loss, model, fit, pool, k,
                                  screen_cfg.conditional)
        if prune == "union":
            candidates = np.union1d(model, recruited)
        else:
            candidates = np.intersect1d(model, recruited)
        fit = fit_penalized(dataset, loss, candidates, penalty, cfg_bic)
        model = fit.active
        records.append(IterationRecord(r, k, recruited, np.array([]),
                                       model, fit))
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
