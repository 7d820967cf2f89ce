"""Fitting primitives behind screening.

Three layers:
  * small unpenalized fits (bivariate marginal, low-dimensional joint),
    batched across features with damped Newton steps;
  * a weighted-L1 + ridge coordinate-descent engine on a per-observation
    quadratic majorization, with active-set sweeps and full-pass KKT
    verification;
  * the LLA outer loop that turns folded-concave penalties into a sequence
    of weighted-L1 subproblems, plus lambda-grid selection (BIC / k-fold CV /
    tuning set / fixed value).

Scalar losses run through problem adapters; the multicategory hinge has its
own sum-to-zero-intercept formulation in _mhinge, with class-k slope blocks
reusing the same weighted-L1 engine.
"""

import math
import warnings
from dataclasses import dataclass, field, replace as _dc_replace

import numpy as np
from numba import njit

from . import _mhinge as mh
from .losses import MultiHinge

LOGISTIC_COEF_CAP = 30.0  # separation guard on standardized scale
_HESS_JITTER = 1e-8       # stabilizer for near-collinear subdesigns


class ScreenlabWarning(UserWarning):
    pass


@dataclass
class SolverConfig:
    """Knobs for penalized fits; defaults match the documented contracts."""

    tol: float = 1e-8            # relative objective tolerance
    max_outer: int = 30          # LLA iterations
    max_inner: int = 1000        # coordinate passes per penalized fit
    n_lambda: int = 100
    lambda_ratio: float = 1e-3   # min/max of the lambda grid
    selection: str = "bic"       # bic | cv | tune | fixed
    cv_folds: int = 5
    lambda_value: float = None   # used by selection="fixed"
    one_step_lla: bool = False
    kkt_tol: float = 1e-7

    def __post_init__(self):
        if not self.tol > 0:
            raise ValueError("tol must be positive")
        if self.n_lambda < 1:
            raise ValueError("n_lambda must be at least 1")
        if not 0 < self.lambda_ratio < 1:
            raise ValueError("lambda_ratio must lie in (0, 1)")
        if self.selection not in ("bic", "cv", "tune", "fixed"):
            raise ValueError(f"unknown lambda selection {self.selection!r}")


@dataclass
class FitResult:
    """Sparse fit: intercept(s), nonzero coefficients, active set, objective.

    beta maps column position to a float, or to a length-K array for
    multicategory fits.  objective is the exact mean loss at the fit plus the
    ridge and penalty terms when present.
    """

    intercepts: np.ndarray
    beta: dict
    active: np.ndarray
    objective: float
    n_iterations: int = 0
    converged: bool = True
    lam: float = None
    selection_table: list = None
    objective_trace: tuple = ()
    flags: dict = field(default_factory=dict)

    def coef_dense(self, p):
        """Dense coefficient array, shape (p,) or (p, K) for multicategory."""
        k = len(np.atleast_1d(self.intercepts))
        out = np.zeros(p) if k == 1 else np.zeros((p, k))
        for j, b in self.beta.items():
            out[j] = b
        return out


# ---------------------------------------------------------------------------
# problem adapters (scalar losses)


class _ScalarProblem:
    def __init__(self, loss, y):
        self.loss = loss
        self.y = np.asarray(y, dtype=float)
        self.global_majorizer = loss.majorizer_is_global

    def _yb(self, eta):
        return self.y if np.ndim(eta) == 1 else self.y[:, None]

    def fit_value(self, eta):
        return self.loss.fit_value(self._yb(eta), eta)

    def fit_gradient(self, eta):
        return self.loss.fit_gradient(self._yb(eta), eta)

    def fit_curvature(self, eta):
        return np.maximum(self.loss.fit_curvature(self._yb(eta), eta), 1e-12)

    def exact_value(self, eta):
        return self.loss.value(self._yb(eta), eta)


def _scalar_problem(loss, y):
    return _ScalarProblem(loss, y)


def _ridge_rho(loss, n):
    """Coefficient rho of the (rho/2)||beta||^2 term in the normalized objective."""
    if isinstance(loss, MultiHinge):
        return 2.0 * loss.ridge / n
    return 0.0


def _coef_cap(loss):
    return LOGISTIC_COEF_CAP if loss.name == "logistic" else None


# ---------------------------------------------------------------------------
# small unpenalized fits (scalar losses)


def _intercept_only(problem, tol=1e-11, max_iter=100):
    n = len(problem.y)
    b0 = 0.0
    eta = np.zeros(n)
    obj = problem.fit_value(eta).mean()
    for _ in range(max_iter):
        g = problem.fit_gradient(eta).mean()
        c = max(problem.fit_curvature(eta).mean(), 1e-12)
        step = -g / c
        t, improved = 1.0, False
        for _ in range(40):
            cand = np.clip(b0 + t * step, -100.0, 100.0)
            new = problem.fit_value(np.full(n, cand)).mean()
            if new <= obj + 1e-14:
                improved = True
                break
            t *= 0.5
        if not improved:
            break
        moved = abs(cand - b0)
        b0, prev, obj = cand, obj, new
        eta = np.full(n, b0)
        if abs(prev - obj) <= tol * (1.0 + abs(prev)) and moved < 1e-10 * (1 + abs(b0)):
            break
    return b0, obj


def _joint_fit(Xsub, problem, rho=0.0, cap=None, tol=1e-10, max_iter=200,
               init=None, offset=None):
    """Damped Newton over (intercept, coefs) for one scalar problem.

    The majorization Hessian carries a 1e-8 jitter, which keeps exactly
    collinear subdesigns solvable (their minimum value is still unique).
    """
    n, m = Xsub.shape
    A = np.empty((n, m + 1))
    A[:, 0] = 1.0
    A[:, 1:] = Xsub
    theta = np.zeros(m + 1)
    if init is not None:
        theta[:] = init
    off = 0.0 if offset is None else offset

    def objective(th):
        eta = off + A @ th
        return problem.fit_value(eta).mean() + 0.5 * rho * th[1:] @ th[1:], eta

    obj, eta = objective(theta)
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        g = problem.fit_gradient(eta)
        c = problem.fit_curvature(eta)
        grad = A.T @ g / n
        grad[1:] += rho * theta[1:]
        H = (A * c[:, None]).T @ A / n
        H[np.arange(1, m + 1), np.arange(1, m + 1)] += rho
        H[np.arange(m + 1), np.arange(m + 1)] += _HESS_JITTER
        try:
            step = np.linalg.solve(H, -grad)
        except np.linalg.LinAlgError:
            step = -grad / np.maximum(np.diag(H), 1e-10)
        t, improved = 1.0, False
        for _ in range(50):
            cand = theta + t * step
            if cap is not None:
                cand[1:] = np.clip(cand[1:], -cap, cap)
            cand_obj, cand_eta = objective(cand)
            if cand_obj <= obj + 1e-14 * (1 + abs(obj)):
                improved = True
                break
            t *= 0.5
        if not improved:
            converged = True
            break
        decrease = obj - cand_obj
        theta, eta, obj = cand, cand_eta, cand_obj
        if decrease <= tol * (1.0 + abs(obj)):
            converged = True
            break
    return theta[0], theta[1:], obj, it, converged


def _batched_bivariate(Xcols, problem, rho=0.0, cap=None, offset=None,
                       tol=1e-9, max_iter=60):
    """Two-parameter fits for every column of one scalar problem."""
    n, q = Xcols.shape
    off = 0.0 if offset is None else np.asarray(offset)[:, None]
    a = np.zeros(q)
    b = np.zeros(q)
    eta = off + a[None, :] + Xcols * b[None, :]
    obj = problem.fit_value(eta).mean(axis=0) + 0.5 * rho * b * b
    live = np.arange(q)
    X_l, eta_l, obj_l = Xcols, eta, obj
    for _ in range(max_iter):
        g = problem.fit_gradient(eta_l)
        c = problem.fit_curvature(eta_l)
        g0 = g.mean(axis=0)
        g1 = (g * X_l).mean(axis=0) + rho * b[live]
        h00 = c.mean(axis=0) + _HESS_JITTER
        h01 = (c * X_l).mean(axis=0)
        h11 = (c * X_l * X_l).mean(axis=0) + rho + _HESS_JITTER
        det = np.maximum(h00 * h11 - h01 * h01, 1e-30)
        da = -(h11 * g0 - h01 * g1) / det
        db = -(h00 * g1 - h01 * g0) / det
        t = np.ones(live.size)
        for _ in range(40):
            ca = a[live] + t * da
            cb = b[live] + t * db
            if cap is not None:
                cb = np.clip(cb, -cap, cap)
            eta_c = off + ca[None, :] + X_l * cb[None, :]
            obj_c = problem.fit_value(eta_c).mean(axis=0) + 0.5 * rho * cb * cb
            worse = obj_c > obj_l + 1e-14 * (1 + np.abs(obj_l))
            if not np.any(worse):
                break
            t[worse] *= 0.5
        done = obj_l - obj_c <= tol * (1.0 + np.abs(obj_l))
        a[live], b[live] = ca, cb
        eta_l, obj_l = eta_c, obj_c
        if np.all(done):
            break
        keep = ~done
        live = live[keep]
        X_l = X_l[:, keep]
        eta_l = eta_l[:, keep]
        obj_l = obj_l[keep]
        if live.size == 0:
            break
    return a, b


def _batched_conditional(Xfixed, Xfree, problem, rho=0.0, cap=None,
                         tol=1e-9, max_iter=60):
    """Joint fits over (intercept, fixed block, one free column), batched
    across free columns; warm-started from the fixed-only fit."""
    n, m = Xfixed.shape
    q = Xfree.shape[1]
    A = np.empty((n, m + 1))
    A[:, 0] = 1.0
    A[:, 1:] = Xfixed
    P = (A[:, :, None] * A[:, None, :]).reshape(n, (m + 1) * (m + 1))
    diag = np.arange(m + 2)
    b0w, bw, _, _, _ = _joint_fit(Xfixed, problem, rho=rho, cap=cap)
    theta = np.tile(np.concatenate(([b0w], bw, [0.0])), (q, 1))
    live = np.arange(q)

    def obj_of(th, cols):
        e = A @ th[:, :m + 1].T + cols * th[:, m + 1][None, :]
        return problem.fit_value(e).mean(axis=0) + 0.5 * rho * (th[:, 1:] ** 2).sum(axis=1), e

    X_l = Xfree
    obj_l, eta_l = obj_of(theta, X_l)
    for _ in range(max_iter):
        th_l = theta[live]
        g = problem.fit_gradient(eta_l)
        c = problem.fit_curvature(eta_l)
        grad = np.empty((live.size, m + 2))
        grad[:, :m + 1] = g.T @ A / n
        grad[:, m + 1] = (g * X_l).mean(axis=0)
        grad[:, 1:] += rho * th_l[:, 1:]
        H = np.empty((live.size, m + 2, m + 2))
        H[:, :m + 1, :m + 1] = (c.T @ P).reshape(live.size, m + 1, m + 1) / n
        cross = (c * X_l).T @ A / n
        H[:, :m + 1, m + 1] = cross
        H[:, m + 1, :m + 1] = cross
        H[:, m + 1, m + 1] = (c * X_l * X_l).mean(axis=0)
        H[:, 1:, 1:][:, np.arange(m + 1), np.arange(m + 1)] += rho
        H[:, diag, diag] += _HESS_JITTER
        step = np.linalg.solve(H, -grad[..., None])[..., 0]
        t = np.ones(live.size)
        for _ in range(40):
            cand = th_l + t[:, None] * step
            if cap is not None:
                cand[:, 1:] = np.clip(cand[:, 1:], -cap, cap)
            obj_c, eta_c = obj_of(cand, X_l)
            worse = obj_c > obj_l + 1e-14 * (1 + np.abs(obj_l))
            if not np.any(worse):
                break
            t[worse] *= 0.5
        done = obj_l - obj_c <= tol * (1.0 + np.abs(obj_l))
        theta[live] = cand
        obj_l, eta_l = obj_c, eta_c
        if np.all(done):
            break
        live = live[~done]
        X_l = X_l[:, ~done]
        eta_l = eta_l[:, ~done]
        obj_l = obj_l[~done]
        if live.size == 0:
            break
    return theta


# ---------------------------------------------------------------------------
# weighted-L1 coordinate descent and the LLA loop


class _CDState:
    __slots__ = ("b0", "beta", "eta")

    def __init__(self, b0, beta, eta):
        self.b0, self.beta, self.eta = b0, beta, eta

    def copy(self):
        return _CDState(self.b0, self.beta.copy(), self.eta.copy())


def _soft(u, w):
    return np.sign(u) * max(abs(u) - w, 0.0)


def _penalized_obj(problem, state, w, rho):
    val = problem.fit_value(state.eta).mean()
    return val + 0.5 * rho * state.beta @ state.beta + w @ np.abs(state.beta)


@njit(cache=True)
def _cd_sweeps(X, c, q, beta, b0_arr, h, w, S, rho, cap, max_passes,
               inner_tol, update_intercept, cmean, dmax=np.inf):
    """Cyclic coordinate sweeps on the frozen quadratic model.

    Mutates q (working gradient), beta and b0_arr in place; returns the
    number of passes run.  X must be Fortran-ordered for column access.
    dmax bounds each coordinate move (trust step for stiff surrogates)."""
    n = X.shape[0]
    passes = 0
    for _ in range(max_passes):
        biggest = 0.0
        for t in range(S.size):
            j = S[t]
            s = 0.0
            for i in range(n):
                s += q[i] * X[i, j]
            gj = s / n + rho * beta[j]
            u = h[t] * beta[j] - gj
            au = abs(u) - w[j]
            bnew = 0.0
            if au > 0.0:
                bnew = au / h[t] if u > 0.0 else -au / h[t]
            if bnew > cap:
                bnew = cap
            elif bnew < -cap:
                bnew = -cap
            d = bnew - beta[j]
            if d > dmax:
                d = dmax
                bnew = beta[j] + d
            elif d < -dmax:
                d = -dmax
                bnew = beta[j] + d
            if d != 0.0:
                for i in range(n):
                    q[i] += c[i] * X[i, j] * d
                beta[j] = bnew
                mv = 0.5 * h[t] * d * d
                if mv > biggest:
                    biggest = mv
        if update_intercept:
            s = 0.0
            for i in range(n):
                s += q[i]
            d0 = -(s / n) / cmean
            if d0 != 0.0:
                b0_arr[0] += d0
                for i in range(n):
                    q[i] += c[i] * d0
                mv = 0.5 * cmean * d0 * d0
                if mv > biggest:
                    biggest = mv
        passes += 1
        if biggest <= inner_tol:
            break
    return passes


def _weighted_l1_fit(X, X2, problem, w, rho, cfg, state, cap=None,
                     pass_budget=None, update_intercept=True):
    """Minimize mean fit_value(b0 + X beta) + (rho/2)||beta||^2 + sum w_j |beta_j|.

    Majorize-then-CD: each outer round freezes per-observation curvature,
    runs a few coordinate-descent sweeps over the active set on the quadratic
    model, then verifies the true-gradient KKT conditions over all
    coordinates.  A step-halving safeguard covers the Poisson case, whose
    local curvature is not a global majorizer.
    """
    n, m = X.shape
    budget = cfg.max_inner if pass_budget is None else pass_budget
    passes = 0
    obj = _penalized_obj(problem, state, w, rho)
    converged = False
    for _ in range(500):
        g = problem.fit_gradient(state.eta)
        c = problem.fit_curvature(state.eta)
        G = X.T @ g / n + rho * state.beta
        scale = max(1.0, np.max(np.abs(G)) if m else 0.0)
        nz = state.beta != 0.0
        act_bad = nz & (np.abs(G + w * np.sign(state.beta)) > cfg.kkt_tol * scale)
        inact_bad = ~nz & (np.abs(G) > w + cfg.kkt_tol * scale)
        g0 = g.mean()
        kkt_ok = not (act_bad.any() or inact_bad.any())
        if update_intercept:
            kkt_ok = kkt_ok and abs(g0) <= cfg.kkt_tol * scale
        if kkt_ok:
            converged = True
            break
        if passes >= budget:
            break
        S = np.flatnonzero(nz | act_bad | inact_bad)
        h = X2[:, S].T @ c / n + rho + 1e-12
        cmean = max(c.mean(), 1e-12)
        prev = state.copy()
        beta = state.beta
        b0_arr = np.array([state.b0])
        inner_tol = 0.1 * cfg.tol * (1.0 + abs(obj))
        max_passes = int(min(10, budget - passes))
        passes += _cd_sweeps(X, c, g.copy(), beta, b0_arr, h, w, S, rho,
                             np.inf if cap is None else float(cap),
                             max_passes, inner_tol, update_intercept, cmean)
        state.b0 = b0_arr[0]
        nzidx = np.flatnonzero(beta)
        state.eta = state.b0 + X[:, nzidx] @ beta[nzidx]
        new_obj = _penalized_obj(problem, state, w, rho)
        if not problem.global_majorizer:
            halvings = 0
            while new_obj > obj + 1e-12 * (1 + abs(obj)) and halvings < 30:
                state.b0 = 0.5 * (state.b0 + prev.b0)
                state.beta = 0.5 * (state.beta + prev.beta)
                nzidx = np.flatnonzero(state.beta)
                state.eta = state.b0 + X[:, nzidx] @ state.beta[nzidx]
                new_obj = _penalized_obj(problem, state, w, rho)
                halvings += 1
        obj = new_obj
    return state, passes, converged


def _weights_stable(new_w, w, lam):
    # floor tied to the KKT precision so small-lambda path points terminate:
    # a weight drift below it cannot break the 1e-6-scale KKT certificate
    if new_w.size == 0:
        return True
    return np.max(np.abs(new_w - w)) <= max(1e-6 * lam, 5e-7)


def _lla_fit(X, X2, problem, penalty, rho, cfg, start_state=None, cap=None):
    """Tangent-weight / weighted-L1 iteration for one scalar problem.

    A cold call starts from beta = 0, so the first subproblem is the plain
    lasso.  start_state continues the iteration from an earlier state (the
    neighboring grid point on a lambda path: the homotopy is anchored at
    zero at lambda_max, which sidesteps the lasso-ordering local minima that
    trap marginally invisible variables).  Iterates until the weights are
    stationary, which pins the KKT system at the returned coefficients.
    """
    n, m = X.shape
    if start_state is not None:
        state = start_state.copy()
        w = penalty.lla_weights(state.beta)
    else:
        b0, _ = _intercept_only(problem)
        state = _CDState(b0, np.zeros(m), np.full(n, b0))
        w = np.full(m, penalty.lam)
    state, passes, conv = _weighted_l1_fit(X, X2, problem, w, rho, cfg, state, cap=cap)
    max_outer = 1 if (cfg.one_step_lla or not penalty.folded_concave) else cfg.max_outer

    def concave_obj(st):
        return (problem.fit_value(st.eta).mean()
                + 0.5 * rho * st.beta @ st.beta
                + penalty.value(np.abs(st.beta)).sum())

    trace = [concave_obj(state)]
    it = 1
    converged = conv
    for it in range(2, max_outer + 1):
        new_w = penalty.lla_weights(state.beta)
        if _weights_stable(new_w, w, penalty.lam):
            it -= 1
            break
        w = new_w
        state, p2, conv = _weighted_l1_fit(X, X2, problem, w, rho, cfg, state, cap=cap)
        converged = conv
        trace.append(concave_obj(state))
    else:
        if penalty.folded_concave and not cfg.one_step_lla and max_outer > 1:
            converged = converged and _weights_stable(
                penalty.lla_weights(state.beta), w, penalty.lam)
    return state, tuple(trace), it, converged


# -- multicategory hinge: constrained coordinate descent -------------------


class _MHState:
    """gamma (K-1 free intercepts), Bf (m, K-1 free slopes), F (n, K)."""

    __slots__ = ("gamma", "Bf", "F")

    def __init__(self, gamma, Bf, F):
        self.gamma, self.Bf, self.F = gamma, Bf, F

    def copy(self):
        return _MHState(self.gamma.copy(), self.Bf.copy(), self.F.copy())

    def full_B(self):
        return mh.full_slopes(self.Bf)


def _mh_sync(X, state):
    state.F = mh.scores(X, mh.full_intercepts(state.gamma), state.full_B())


def _mh_group_norms(B):
    return np.linalg.norm(B, axis=1)


def _mh_obj(masks, state, w, rho, penalty=None):
    B = state.full_B()
    out = mh.surrogate_mean_loss(masks, state.F) + mh.ridge_value(rho, B)
    norms = _mh_group_norms(B)
    if w is not None:
        out += float(w @ norms)
    if penalty is not None:
        out += float(penalty.value(norms).sum())
    return out


_MH_MAPS = {}


def _mh_maps(K):
    """Constraint map M (K x K-1) with f = M v, the pseudo-projection
    P = M (M'M)^{-1} for the group zero test, and the symmetric square root
    L of M'M (with inverse) that turns ||M v|| into the Euclidean ||L v||.

    M'M = I + 11', so L = I + a 11' and L^{-1} = I + b 11' in closed form."""
    if K not in _MH_MAPS:
        nf = K - 1
        M = np.vstack([np.eye(nf), -np.ones((1, nf))])
        MtM_inv = np.eye(nf) - np.ones((nf, nf)) / K
        a = (math.sqrt(K) - 1.0) / nf
        b = (1.0 / math.sqrt(K) - 1.0) / nf
        L = np.eye(nf) + a * np.ones((nf, nf))
        Linv = np.eye(nf) + b * np.ones((nf, nf))
        _MH_MAPS[K] = (M, M @ MtM_inv, L, Linv)
    return _MH_MAPS[K]


def _mh_group_step(vc, g, H, hz, L, Linv, M, MtM, w, refine=True):
    """Group block update: closed-form soft-threshold in z = L v coordinates
    (hz majorizes the block Hessian there, so zeros are exact and descent is
    guaranteed), then up to two Newton refinements on the smooth region.
    refine=False keeps the first-order step only (path-scoring precision)."""
    z = L @ vc
    zu = z - (Linv @ g) / hz
    nrm = np.linalg.norm(zu)
    if nrm * hz <= w:
        return np.zeros_like(vc)
    v = Linv @ (zu * (1.0 - w / (hz * nrm)))
    if not refine:
        return v

    def phi(vv):
        return (g @ (vv - vc) + 0.5 * (vv - vc) @ H @ (vv - vc)
                + w * np.linalg.norm(M @ vv))

    cur = phi(v)
    for _ in range(2):
        r = M @ v
        rn = np.linalg.norm(r)
        if rn < 1e-12:
            break
        Mtr = M.T @ r
        grad = g + H @ (v - vc) + w * Mtr / rn
        hess = H + w * (MtM / rn - np.outer(Mtr, Mtr) / rn ** 3)
        hess[np.diag_indices(v.size)] += 1e-12
        try:
            step = np.linalg.solve(hess, -grad)
        except np.linalg.LinAlgError:
            break
        t, improved = 1.0, False
        for _ in range(8):
            cand = v + t * step
            val = phi(cand)
            if val <= cur + 1e-14 * (1 + abs(cur)):
                improved = True
                break
            t *= 0.5
        if not improved:
            break
        v, cur = cand, val
    return v


def _mh_group_kkt(X, g, state, w, rho, n):
    """Group stationarity: zero features need the pseudo-projected gradient
    inside the w-ball; active ones need a vanishing smooth+norm gradient."""
    K = g.shape[1]
    nf = K - 1
    M, P = _mh_maps(K)[:2]
    Bf = state.Bf
    rowsum = Bf.sum(axis=1)
    G = X.T @ (g[:, :nf] - g[:, [K - 1]]) / n + rho * (Bf + rowsum[:, None])
    scale = max(1.0, float(np.max(np.abs(G))) if G.size else 0.0)
    act_v, inact_v = 0.0, 0.0
    norms = np.linalg.norm(Bf @ M.T, axis=1)
    for j in range(Bf.shape[0]):
        if norms[j] == 0.0:
            inact_v = max(inact_v,
                          float(np.linalg.norm(P @ G[j]) - w[j]))
        else:
            r = M @ Bf[j]
            resid = G[j] + w[j] * (M.T @ r) / np.linalg.norm(r)
            act_v = max(act_v, float(np.max(np.abs(resid))))
    gm = g.mean(axis=0)
    gv = float(np.max(np.abs(gm[:nf] - gm[-1])))
    return act_v, max(inact_v, 0.0), gv, scale


def _mh_weighted_solve(X, X2, masks, w, rho, cfg, state):
    """Majorize-then-block-CD: per feature, the (K-1)-dim group subproblem
    is solved under the frozen quadratic; step-halving guards the local
    softplus curvature."""
    n, m = X.shape
    K = masks.shape[1]
    nf = K - 1
    M, P, L, Linv = _mh_maps(K)
    MtM = M.T @ M
    refine = cfg.kkt_tol < 1e-5
    passes = 0
    obj = _mh_obj(masks, state, w, rho)
    ridge_H = rho * (np.eye(nf) + np.ones((nf, nf)))
    for _ in range(300):
        g, c = mh._pieces(masks, state.F)
        act_v, inact_v, gv, scale = _mh_group_kkt(X, g, state, w, rho, n)
        tol = cfg.kkt_tol * scale
        if act_v <= tol and inact_v <= tol and gv <= tol:
            return state, passes, True
        if passes >= cfg.max_inner:
            return state, passes, False
        passes += 1
        e1 = X2.T @ c[:, :nf] / n          # (m, nf)
        eK = X2.T @ c[:, K - 1] / n        # (m,)
        cmean = np.maximum(c.mean(axis=0), 1e-12)
        q = g.copy()
        prev = state.copy()
        norms = np.linalg.norm(state.Bf @ M.T, axis=1)
        Gnow = (X.T @ (q[:, :nf] - q[:, [K - 1]]) / n
                + rho * (state.Bf + state.Bf.sum(axis=1, keepdims=True)))
        live = np.flatnonzero((norms > 0)
                              | (np.linalg.norm(Gnow @ P.T, axis=1) > w - tol))
        # per-block Hessians and z-space majorization constants (fixed per round)
        hz = np.empty(live.size)
        Hjs = []
        for t, j in enumerate(live):
            Hj = np.diag(e1[j]) + eK[j] + ridge_H
            Hj[np.diag_indices(nf)] += 1e-12
            Hjs.append(Hj)
            Hz = Linv @ Hj @ Linv
            hz[t] = np.linalg.eigvalsh(Hz)[-1] + 1e-12
        for _ in range(8):
            for t, j in enumerate(live):
                vc = state.Bf[j]
                xj = X[:, j]
                qd = xj @ q
                Gj = (qd[:nf] - qd[K - 1]) / n + rho * (vc + vc.sum())
                vnew = _mh_group_step(vc, Gj, Hjs[t], hz[t], L, Linv, M,
                                      MtM, w[j], refine=refine)
                d = vnew - vc
                if np.any(d):
                    for a in range(nf):
                        if d[a] != 0.0:
                            q[:, a] += c[:, a] * xj * d[a]
                    q[:, K - 1] -= c[:, K - 1] * xj * d.sum()
                    state.Bf[j] = vnew.copy()
            for a in range(nf):
                dg = -(q[:, a].mean() - q[:, K - 1].mean()) / (cmean[a] + cmean[K - 1])
                if dg != 0.0:
                    state.gamma[a] += dg
                    q[:, a] += c[:, a] * dg
                    q[:, K - 1] -= c[:, K - 1] * dg
        _mh_sync(X, state)
        new = _mh_obj(masks, state, w, rho)
        halvings = 0
        while new > obj + 1e-12 * (1 + abs(obj)) and halvings < 30:
            state.gamma = 0.5 * (state.gamma + prev.gamma)
            state.Bf = 0.5 * (state.Bf + prev.Bf)
            _mh_sync(X, state)
            new = _mh_obj(masks, state, w, rho)
            halvings += 1
        obj = new
    return state, passes, False


def _mh_lla_fit(X, X2, masks, penalty, rho, cfg, warm=None):
    """Tangent-weight iteration for the constrained hinge fit; weights apply
    to all K coefficient blocks including the implied class."""
    n, m = X.shape
    K = masks.shape[1]
    if warm is not None:
        state = warm.copy()
        w = penalty.lla_weights(_mh_group_norms(state.full_B()))
    else:
        gamma, _ = mh.intercept_fit(np.zeros((n, K)), masks)
        state = _MHState(gamma, np.zeros((m, K - 1)), None)
        _mh_sync(X, state)
        w = np.full(m, penalty.lam)
    state, passes, conv = _mh_weighted_solve(X, X2, masks, w, rho, cfg, state)
    max_outer = 1 if (cfg.one_step_lla or not penalty.folded_concave) else cfg.max_outer
    trace = [_mh_obj(masks, state, None, rho, penalty=penalty)]
    it = 1
    converged = conv
    for it in range(2, max_outer + 1):
        new_w = penalty.lla_weights(_mh_group_norms(state.full_B()))
        if _weights_stable(new_w, w, penalty.lam):
            it -= 1
            break
        w = new_w
        state, p2, conv = _mh_weighted_solve(X, X2, masks, w, rho, cfg, state)
        converged = conv
        trace.append(_mh_obj(masks, state, None, rho, penalty=penalty))
    else:
        if penalty.folded_concave and not cfg.one_step_lla and max_outer > 1:
            converged = converged and _weights_stable(
                penalty.lla_weights(_mh_group_norms(state.full_B())), w,
                penalty.lam)
    return state, tuple(trace), it, converged


# ---------------------------------------------------------------------------
# lambda grid, path fitting, selection


def _null_gradient_max(X, loss, y, rho):
    n = X.shape[0]
    if isinstance(loss, MultiHinge):
        # group threshold: the pseudo-projected null gradient's largest norm
        masks = mh.class_masks(y, loss.n_classes)
        gamma, _ = mh.intercept_fit(np.zeros((n, loss.n_classes)), masks)
        F = np.tile(mh.full_intercepts(gamma), (n, 1))
        g, _ = mh._pieces(masks, F)
        nf = loss.n_classes - 1
        G = X.T @ (g[:, :nf] - g[:, [nf]]) / n
        P = _mh_maps(loss.n_classes)[1]
        return float(np.max(np.linalg.norm(G @ P.T, axis=1)))
    prob = _scalar_problem(loss, y)
    b0, _ = _intercept_only(prob)
    g = prob.fit_gradient(np.full(n, b0))
    return np.max(np.abs(X.T @ g / n))


def lambda_max(dataset, loss, candidates):
    """Smallest lambda with an all-zero solution (null-gradient sup norm)."""
    candidates = np.asarray(candidates, dtype=int)
    X = dataset.x[:, candidates]
    rho = _ridge_rho(loss, dataset.n)
    return max(_null_gradient_max(X, loss, dataset.y.values, rho), 1e-10)


def _grid_from(lmax, cfg):
    if cfg.n_lambda == 1:
        return np.array([lmax])
    return np.geomspace(lmax, lmax * cfg.lambda_ratio, cfg.n_lambda)


@dataclass
class _PathPoint:
    lam: float
    payload: object     # scalar: _CDState; multihinge: (gamma, [states])
    size: int
    mean_exact: float
    iters: int
    converged: bool
    trace: tuple


def _pilot_state(X, loss, y, rho, cap):
    """Unpenalized joint fit used as the LLA anchor on folded-penalty paths.
    The tangent weights at this pilot free the large conditional effects and
    penalize the small ones, which reaches the sparse-unbiased stationary
    points that the zero-start lasso ordering misses when noise proxies
    screen a marginally invisible variable."""
    n, m = X.shape
    if m == 0 or m > min(n // 2, 400):
        return None
    if isinstance(loss, MultiHinge):
        masks = mh.class_masks(y, loss.n_classes)
        gamma, B, _, _, conv = mh.newton_full(X, masks, rho)
        if not conv:
            return None
        state = _MHState(gamma, B[:, :loss.n_classes - 1].copy(), None)
        _mh_sync(X, state)
        return state, float(np.abs(B).max(initial=0.0))
    prob = _scalar_problem(loss, y)
    b0, b, _, _, conv = _joint_fit(X, prob, rho=rho, cap=cap)
    if not conv:
        return None
    return _CDState(b0, b.copy(), b0 + X @ b), float(np.abs(b).max(initial=0.0))


def _path_fit(X, loss, y, penalty, rho, cfg, grid, cap=None, pilot=None):
    """Fits along a descending lambda grid.

    With a pilot (folded penalty, candidates well below n), every lambda
    starts from the pilot tangent: the flat tail frees the pilot's large
    coefficients while the small ones stay penalized, so the path consists
    of the sparse-unbiased stationary points the oracle theory attaches to
    root-n pilots.  Without one, the path is the zero-anchored homotopy
    (warm chain from lambda_max, where the first subproblem is the lasso)."""
    X = np.asfortranarray(X)
    X2 = np.asfortranarray(X * X)
    points = []
    use_pilot = (pilot is not None and penalty.folded_concave
                 and not cfg.one_step_lla)
    if isinstance(loss, MultiHinge):
        masks = mh.class_masks(y, loss.n_classes)
        warm = None
        for lam in grid:
            pen = penalty.with_lambda(lam)
            state, tr, it, cv = _mh_lla_fit(
                X, X2, masks, pen, rho, cfg,
                warm=pilot[0] if use_pilot else warm)
            if not use_pilot:
                warm = state
            size = int(np.any(state.full_B() != 0.0, axis=1).sum())
            points.append(_PathPoint(lam, state.copy(), size,
                                     mh.exact_mean_loss(masks, state.F),
                                     it, cv, tr))
        return points
    prob = _scalar_problem(loss, y)
    warm = None
    for lam in grid:
        pen = penalty.with_lambda(lam)
        st, tr, it, cv = _lla_fit(X, X2, prob, pen, rho, cfg,
                                  start_state=pilot[0] if use_pilot else warm,
                                  cap=cap)
        if not use_pilot:
            warm = st
        points.append(_PathPoint(lam, st.copy(), int((st.beta != 0).sum()),
                                 float(prob.exact_value(st.eta).mean()),
                                 it, cv, tr))
    return points


def _eval_exact(loss, yval, Xval, point):
    """Mean exact loss of a path point's coefficients on held-out rows."""
    if isinstance(loss, MultiHinge):
        state = point.payload
        F = mh.scores(Xval, mh.full_intercepts(state.gamma), state.full_B())
        return mh.exact_mean_loss(mh.class_masks(yval, loss.n_classes), F)
    st = point.payload
    nz = np.flatnonzero(st.beta)
    eta = st.b0 + Xval[:, nz] @ st.beta[nz]
    return float(_scalar_problem(loss, yval).exact_value(eta).mean())


def _pick(scores, rel_tie=1e-4):
    """Minimizer index with ties going to the larger lambda (grids descend,
    so that is the smallest tied index).  Scores within rel_tie of the
    minimum count as tied: folded-tail plateaus are equal only up to solver
    tolerance, and near any smooth minimum the neighbors differ by less than
    the noise, so snapping such quasi-ties toward the sparser model is the
    intended parsimony rule."""
    scores = np.asarray(scores, dtype=float)
    best = np.nanmin(scores)
    tied = np.flatnonzero(scores <= best + rel_tie * (1.0 + abs(best)))
    return int(tied[0])


def _kfold_indices(n, k, rng, labels=None):
    """Random folds; stratified by label when labels are supplied so every
    training part keeps every class."""
    gen = rng.generator() if hasattr(rng, "generator") else np.random.default_rng(rng)
    folds = [[] for _ in range(k)]
    if labels is None:
        perm = gen.permutation(n)
        for i, idx in enumerate(perm):
            folds[i % k].append(idx)
    else:
        labels = np.asarray(labels)
        for lab in np.unique(labels):
            rows = gen.permutation(np.flatnonzero(labels == lab))
            start = int(gen.integers(k))
            for i, idx in enumerate(rows):
                folds[(start + i) % k].append(idx)
    return [np.sort(np.array(f, dtype=int)) for f in folds]


def _select(dataset, loss, candidates, penalty, cfg, tuning=None, rng=None):
    """Returns (lam, table, full-data path points or None)."""
    candidates = np.asarray(candidates, dtype=int)
    X = dataset.x[:, candidates]
    y = dataset.y.values
    n = dataset.n
    rho = _ridge_rho(loss, n)
    cap = _coef_cap(loss)
    if cfg.selection == "fixed":
        if cfg.lambda_value is None:
            raise ValueError("selection='fixed' needs lambda_value")
        lam = float(cfg.lambda_value)
        return lam, [(lam, 0.0, -1)], None
    pilot = None
    lmax = max(_null_gradient_max(X, loss, y, rho), 1e-10)
    if penalty.folded_concave and not cfg.one_step_lla:
        pilot = _pilot_state(X, loss, y, rho, cap)
        if pilot is not None:
            # cover the regime where the flat tail frees the pilot's large
            # coefficients while the small ones still feel the penalty
            lmax = max(lmax, pilot[-1] / penalty.a)
    grid = _grid_from(lmax, cfg)
    # path points only feed the score table; the winner is re-polished to
    # full KKT precision by the caller
    cfg_path = _dc_replace(cfg, kkt_tol=max(cfg.kkt_tol, 1e-4),
                           tol=max(cfg.tol, 1e-7))
    if cfg.selection == "bic":
        pts = _path_fit(X, loss, y, penalty, rho, cfg_path, grid, cap=cap,
                        pilot=pilot)
        scores = [2.0 * n * p.mean_exact + np.log(n) * p.size for p in pts]
    elif cfg.selection == "tune":
        if tuning is None:
            raise ValueError("selection='tune' needs a tuning dataset")
        pts = _path_fit(X, loss, y, penalty, rho, cfg_path, grid, cap=cap,
                        pilot=pilot)
        Xt = tuning.x[:, candidates]
        scores = [_eval_exact(loss, tuning.y.values, Xt, p) for p in pts]
    else:  # cv
        if rng is None:
            rng = np.random.default_rng(0)
        labels = y if dataset.y.kind in ("binary", "class") else None
        folds = _kfold_indices(n, cfg.cv_folds, rng, labels)
        cum = np.zeros(len(grid))
        for fold in folds:
            tr = np.setdiff1d(np.arange(n), fold, assume_unique=False)
            fpilot = None
            if penalty.folded_concave and not cfg.one_step_lla:
                fpilot = _pilot_state(np.ascontiguousarray(X[tr]), loss,
                                      y[tr], rho, cap)
            fpts = _path_fit(X[tr], loss, y[tr], penalty, rho, cfg_path,
                             grid, cap=cap, pilot=fpilot)
            for i, p in enumerate(fpts):
                cum[i] += _eval_exact(loss, y[fold], X[fold], p)
        scores = cum / len(folds)
        pts = None
    idx = _pick(scores)
    table = [(float(grid[i]), float(scores[i]),
              (pts[i].size if pts is not None else -1))
             for i in range(len(grid))]
    return float(grid[idx]), table, (pts[idx] if pts is not None else None)


def select_lambda(dataset, loss, candidates, penalty, cfg, tuning=None, rng=None):
    """Choose lambda on the internal grid.

    BIC: 2 n Q + log(n) |active| along the full-data path.  CV: mean
    held-out exact loss across cfg.cv_folds folds (stratified for
    classification responses).  tune: exact loss on a held-out tuning
    dataset on the same scale.  Ties go to the larger lambda.  Returns
    (lambda, table of (lambda, score, model size)).
    """
    loss.validate_response(dataset.y)
    lam, table, _ = _select(dataset, loss, candidates, penalty, cfg,
                            tuning=tuning, rng=rng)
    return lam, table


# ---------------------------------------------------------------------------
# public fitting operations


def _mh_result(loss, state, candidates, mean_exact, penalty, rho,
               iters, converged, **kw):
    b0 = mh.full_intercepts(state.gamma)
    B = state.full_B()
    beta = {}
    for t, j in enumerate(candidates):
        if np.any(B[t] != 0.0):
            beta[int(j)] = B[t].copy()
    active = np.array(sorted(beta), dtype=int)
    pen_val = float(penalty.value(_mh_group_norms(B)).sum()) \
        if penalty is not None else 0.0
    ridge_val = 0.5 * rho * float((B ** 2).sum())
    obj = float(mean_exact + ridge_val + pen_val)
    return FitResult(b0, beta, active, obj, iters, converged, **kw)


def _scalar_result(state, candidates, mean_exact, penalty, rho, iters,
                   converged, **kw):
    beta = {int(j): float(state.beta[t]) for t, j in enumerate(candidates)
            if state.beta[t] != 0.0}
    active = np.array(sorted(beta), dtype=int)
    pen_val = float(penalty.value(np.abs(state.beta)).sum()) if penalty is not None else 0.0
    ridge_val = 0.5 * rho * float(state.beta @ state.beta)
    obj = float(mean_exact + ridge_val + pen_val)
    return FitResult(np.array([state.b0]), beta, active, obj, iters,
                     converged, **kw)


def fit_penalized(dataset, loss, candidates, penalty, cfg=None, tuning=None,
                  rng=None):
    """Penalized pseudo-likelihood fit over the candidate columns.

    Runs LLA from zero at the lambda chosen per cfg.selection; the intercept
    is never penalized.  Empty candidates give the intercept-only fit; a
    selected lambda with an all-zero solution is returned with the
    "empty_model" flag set.
    """
    cfg = cfg or SolverConfig()
    loss.validate_response(dataset.y)
    candidates = np.asarray(candidates, dtype=int)
    n = dataset.n
    y = dataset.y.values
    rho = _ridge_rho(loss, n)
    cap = _coef_cap(loss)
    if candidates.size == 0:
        return _intercept_only_result(dataset, loss, rho)
    if candidates.size >= n:
        warnings.warn(f"{candidates.size} candidates with only {n} rows; "
                      "fit may be unstable", ScreenlabWarning, stacklevel=2)
    lam, table, point = _select(dataset, loss, candidates, penalty, cfg,
                                tuning=tuning, rng=rng)
    # polish at the selected lambda to full KKT precision, warm-started from
    # the (loosely solved) path point when one exists
    X = np.asfortranarray(dataset.x[:, candidates])
    X2 = np.asfortranarray(X * X)
    pen = penalty.with_lambda(lam)
    pilot = None
    if point is None and penalty.folded_concave and not cfg.one_step_lla:
        pilot = _pilot_state(X, loss, y, rho, cap)
    if isinstance(loss, MultiHinge):
        masks = mh.class_masks(y, loss.n_classes)
        warm = point.payload if point is not None else \
            (pilot[0] if pilot is not None else None)
        state, tr, it, cv = _mh_lla_fit(X, X2, masks, pen, rho, cfg,
                                        warm=warm)
        res = _mh_result(loss, state, candidates,
                         mh.exact_mean_loss(masks, state.F), pen, rho, it,
                         cv, lam=lam, selection_table=table,
                         objective_trace=tr)
    else:
        prob = _scalar_problem(loss, y)
        warm = point.payload if point is not None else \
            (pilot[0] if pilot is not None else None)
        st, tr, it, cv = _lla_fit(X, X2, prob, pen, rho, cfg,
                                  start_state=warm, cap=cap)
        res = _scalar_result(st, candidates,
                             float(prob.exact_value(st.eta).mean()), pen, rho,
                             it, cv, lam=lam, selection_table=table,
                             objective_trace=tr)
        if cap is not None and st.beta.size and np.max(np.abs(st.beta)) >= cap:
            res.flags["separation_capped"] = True
        if loss.name == "poisson" and np.max(np.abs(st.eta)) >= 30.0:
            res.flags["eta_clamped"] = True
    if res.active.size == 0:
        res.flags["empty_model"] = True
    return res


def _intercept_only_result(dataset, loss, rho):
    n = dataset.n
    if isinstance(loss, MultiHinge):
        masks = mh.class_masks(dataset.y.values, loss.n_classes)
        gamma, _ = mh.intercept_fit(np.zeros((n, loss.n_classes)), masks)
        b0 = mh.full_intercepts(gamma)
        F = np.tile(b0, (n, 1))
        return FitResult(b0, {}, np.array([], dtype=int),
                         mh.exact_mean_loss(masks, F),
                         flags={"empty_model": True})
    prob = _scalar_problem(loss, dataset.y.values)
    b0, _ = _intercept_only(prob)
    obj = float(prob.exact_value(np.full(n, b0)).mean())
    return FitResult(np.array([b0]), {}, np.array([], dtype=int), obj,
                     flags={"empty_model": True})


def fit_marginal(dataset, loss, j, return_result=True):
    """Marginal utility of column j: the minimized bivariate objective.

    For the multicategory hinge the fit carries one (intercept, slope) pair
    per class with sum-to-zero intercepts plus the identifiability ridge;
    reported utilities use the exact hinge loss at the surrogate optimum.
    """
    loss.validate_response(dataset.y)
    cols = np.array([j], dtype=int)
    if isinstance(loss, MultiHinge):
        masks = mh.class_masks(dataset.y.values, loss.n_classes)
        rho = _ridge_rho(loss, dataset.n)
        exact, b0s, Bs = mh.scan_marginal(dataset.x[:, cols], masks, rho)
        if not return_result:
            return float(exact[0])
        beta = {int(j): Bs[0].copy()} if np.any(Bs[0] != 0.0) else {}
        res = FitResult(b0s[0], beta, np.array(sorted(beta), dtype=int),
                        float(exact[0]))
        return float(exact[0]), res
    utils, params = _scan_columns(dataset, loss, cols)
    if not return_result:
        return float(utils[0])
    b0s, bs = params
    beta = {int(j): float(bs[0])} if bs[0] != 0.0 else {}
    res = FitResult(np.array([b0s[0]]), beta,
                    np.array(sorted(beta), dtype=int), float(utils[0]))
    return float(utils[0]), res


def _scan_columns(dataset, loss, cols, offset=None):
    """Exact marginal utilities for the given columns (scalar losses)."""
    y = dataset.y.values
    n = dataset.n
    cap = _coef_cap(loss)
    prob = _scalar_problem(loss, y)
    utils = np.zeros(cols.size)
    b0_all = np.zeros(cols.size)
    b_all = np.zeros(cols.size)
    chunk = max(1, int(4.0e6 / max(n, 1)))
    for start in range(0, cols.size, chunk):
        sl = slice(start, min(start + chunk, cols.size))
        Xc = dataset.x[:, cols[sl]]
        b0s, bs = _batched_bivariate(Xc, prob, cap=cap, offset=offset)
        off = 0.0 if offset is None else np.asarray(offset)[:, None]
        eta = off + b0s[None, :] + Xc * bs[None, :]
        utils[sl] = prob.exact_value(eta).mean(axis=0)
        b0_all[sl] = b0s
        b_all[sl] = bs
    return utils, (b0_all, b_all)


def marginal_utilities(dataset, loss, cols=None):
    """Utilities for every (or the given) non-constant column."""
    loss.validate_response(dataset.y)
    if cols is None:
        cols = dataset.usable_columns()
    cols = np.asarray(cols, dtype=int)
    if isinstance(loss, MultiHinge):
        masks = mh.class_masks(dataset.y.values, loss.n_classes)
        rho = _ridge_rho(loss, dataset.n)
        utils = np.zeros(cols.size)
        chunk = max(1, int(2.0e6 / max(dataset.n * loss.n_classes, 1)))
        for start in range(0, cols.size, chunk):
            sl = slice(start, min(start + chunk, cols.size))
            utils[sl], _, _ = mh.scan_marginal(dataset.x[:, cols[sl]], masks, rho)
        return cols, utils
    utils, _ = _scan_columns(dataset, loss, cols)
    return cols, utils


def fit_conditional(dataset, loss, fixed, j):
    """Utility of column j on top of the fixed columns (joint refit)."""
    loss.validate_response(dataset.y)
    fixed = np.asarray(fixed, dtype=int)
    if j in set(fixed.tolist()):
        raise ValueError("j must not belong to the fixed set")
    if fixed.size + 1 >= dataset.n:
        raise ValueError("fixed set too large for the sample size")
    if fixed.size == 0:
        return fit_marginal(dataset, loss, j, return_result=False)
    Xf = dataset.x[:, fixed]
    if fixed.size > 1:
        cond = np.linalg.cond(Xf.T @ Xf / dataset.n)
        if not np.isfinite(cond) or cond > 1e10:
            warnings.warn("ill-conditioned fixed subdesign; fit is "
                          "ridge-stabilized", ScreenlabWarning, stacklevel=2)
    _, utils = conditional_utilities(dataset, loss, fixed,
                                     np.array([j], dtype=int))
    return float(utils[0])


def conditional_utilities(dataset, loss, fixed, cols):
    """Joint conditional utilities for many columns at once."""
    fixed = np.asarray(fixed, dtype=int)
    cols = np.asarray(cols, dtype=int)
    n = dataset.n
    rho = _ridge_rho(loss, n)
    cap = _coef_cap(loss)
    Xfixed = dataset.x[:, fixed]
    utils = np.zeros(cols.size)
    denom = max(n * (fixed.size + 2), 1)
    chunk = max(16, int(4.0e6 / denom))
    if isinstance(loss, MultiHinge):
        masks = mh.class_masks(dataset.y.values, loss.n_classes)
        warm = mh.newton_full(Xfixed, masks, rho)
        for start in range(0, cols.size, chunk):
            sl = slice(start, min(start + chunk, cols.size))
            utils[sl] = mh.scan_conditional(Xfixed, dataset.x[:, cols[sl]],
                                            masks, rho, warm=warm)
        return cols, utils
    prob = _scalar_problem(loss, dataset.y.values)
    m = fixed.size
    for start in range(0, cols.size, chunk):
        sl = slice(start, min(start + chunk, cols.size))
        Xfree = dataset.x[:, cols[sl]]
        theta = _batched_conditional(Xfixed, Xfree, prob, rho=rho, cap=cap)
        eta = (np.column_stack([np.ones(n), Xfixed]) @ theta[:, :m + 1].T
               + Xfree * theta[:, m + 1][None, :])
        utils[sl] = prob.exact_value(eta).mean(axis=0)
    return cols, utils


def fit_conditional_residual(dataset, loss, fixed_fit, j):
    """Cheaper alternative scan: hold the fixed-model coefficients and refit
    only (intercept, beta_j); for quadratic loss this is the residual
    regression of the classical iterative screening recipe."""
    _, utils = conditional_residual_utilities(dataset, loss, fixed_fit,
                                              np.array([j], dtype=int))
    return float(utils[0])


def conditional_residual_utilities(dataset, loss, fixed_fit, cols):
    cols = np.asarray(cols, dtype=int)
    offset = _fit_offset(dataset, loss, fixed_fit)
    if isinstance(loss, MultiHinge):
        masks = mh.class_masks(dataset.y.values, loss.n_classes)
        rho = _ridge_rho(loss, dataset.n)
        utils = np.zeros(cols.size)
        chunk = max(1, int(2.0e6 / max(dataset.n * loss.n_classes, 1)))
        for start in range(0, cols.size, chunk):
            sl = slice(start, min(start + chunk, cols.size))
            utils[sl], _, _ = mh.scan_marginal(dataset.x[:, cols[sl]], masks,
                                               rho, offsets=offset)
        return cols, utils
    utils, _ = _scan_columns(dataset, loss, cols, offset=offset)
    return cols, utils


def _fit_offset(dataset, loss, fit):
    """Slope-only linear predictor of a FitResult on this dataset; the scan
    re-optimizes intercepts alongside the new column."""
    if isinstance(loss, MultiHinge):
        off = np.zeros((dataset.n, loss.n_classes))
        for j, b in fit.beta.items():
            off += dataset.x[:, [j]] * np.asarray(b)[None, :]
        return off
    off = np.zeros(dataset.n)
    for j, b in fit.beta.items():
        off += dataset.x[:, j] * b
    return off


def fit_unpenalized(dataset, loss, cols):
    """Joint unpenalized fit over the given columns (plus intercept)."""
    loss.validate_response(dataset.y)
    cols = np.asarray(cols, dtype=int)
    n = dataset.n
    rho = _ridge_rho(loss, n)
    Xsub = dataset.x[:, cols]
    if isinstance(loss, MultiHinge):
        masks = mh.class_masks(dataset.y.values, loss.n_classes)
        gamma, B, _, it, cv = mh.newton_full(Xsub, masks, rho)
        b0 = mh.full_intercepts(gamma)
        F = mh.scores(Xsub, b0, B)
        beta = {int(j): B[t].copy() for t, j in enumerate(cols)}
        return FitResult(b0, beta, np.sort(cols), mh.exact_mean_loss(masks, F),
                         it, cv)
    prob = _scalar_problem(loss, dataset.y.values)
    b0, b, _, it, cv = _joint_fit(Xsub, prob, cap=_coef_cap(loss))
    eta = b0 + Xsub @ b
    beta = {int(j): float(b[t]) for t, j in enumerate(cols)}
    return FitResult(np.array([b0]), beta, np.sort(cols),
                     float(prob.exact_value(eta).mean()), it, cv)


def kkt_residuals(dataset, loss, candidates, penalty, fit):
    """Max KKT violations of a penalized fit, with LLA tangent weights taken
    at the fitted coefficients.  Returns (active, inactive, scale) maxima."""
    candidates = np.asarray(candidates, dtype=int)
    X = dataset.x[:, candidates]
    n = dataset.n
    rho = _ridge_rho(loss, n)
    pen = penalty.with_lambda(fit.lam if fit.lam is not None else penalty.lam)
    dense = fit.coef_dense(dataset.p)
    act_v, inact_v, scale = 0.0, 0.0, 1.0
    if isinstance(loss, MultiHinge):
        masks = mh.class_masks(dataset.y.values, loss.n_classes)
        B = dense[candidates]
        state = _MHState(np.asarray(fit.intercepts[:-1], dtype=float),
                         B[:, :loss.n_classes - 1].copy(), None)
        _mh_sync(X, state)
        g, _ = mh._pieces(masks, state.F)
        w = pen.lla_weights(_mh_group_norms(B))
        act_v, inact_v, gv, scale = _mh_group_kkt(X, g, state, w, rho, n)
        return max(act_v, gv), inact_v, scale
    prob = _scalar_problem(loss, dataset.y.values)
    beta = dense[candidates]
    nzidx = np.flatnonzero(beta)
    eta = fit.intercepts[0] + X[:, nzidx] @ beta[nzidx]
    G = X.T @ prob.fit_gradient(eta) / n + rho * beta
    wts = pen.lla_weights(beta)
    scale = max(scale, np.max(np.abs(G)))
    nz = beta != 0.0
    if nz.any():
        act_v = np.max(np.abs(G[nz] + wts[nz] * np.sign(beta[nz])))
    if (~nz).any():
        inact_v = np.max(np.maximum(np.abs(G[~nz]) - wts[~nz], 0.0))
    return act_v, inact_v, scale
