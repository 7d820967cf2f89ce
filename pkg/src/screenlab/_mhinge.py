"""Multicategory hinge fits with full sum-to-zero score constraints.

Model: f_k(x) = b0_k + x' b_k, k = 1..K, with sum_k b0_k = 0 and
sum_k b_jk = 0 for every column j (the construction the four-class loss is
built on).  Without the slope constraint the objective admits a degenerate
corner -- K-1 classes park their scores at -1 and the remaining class
absorbs everything -- which destroys both utilities and argmax prediction.
Under the full constraint that corner forces the compensating class's score
to a constant +$(K-1)$ and costs hinge mass on most rows, so honest spread
fits win.

Internally class K is eliminated: theta carries classes 1..K-1 and
f_K = -(f_1 + ... + f_{K-1}).  Losses are smoothed per class with the
softplus ramp; the identifiability ridge (rho/2) * sum_k |b_k|^2 includes
the implied class-K block.
"""

import numpy as np

from .losses import RampSurrogate

_JITTER = 1e-8
_RAMP = RampSurrogate()


def class_masks(y, n_classes):
    """(n, K) float mask; column k marks rows whose label is not k+1."""
    y = np.asarray(y, dtype=int)
    return (y[:, None] != np.arange(1, n_classes + 1)[None, :]).astype(float)


def full_intercepts(gamma):
    return np.concatenate([gamma, [-gamma.sum()]])


def full_slopes(B_free):
    """(m, K) slopes from the free (m, K-1) block."""
    return np.concatenate([B_free, -B_free.sum(axis=1, keepdims=True)], axis=1)


def scores(X, b0, B):
    """(n, K) class scores from intercepts b0 (K,) and slopes B (m, K)."""
    return b0[None, :] + (X @ B if B.size else 0.0)


def exact_mean_loss(masks, F):
    """mean_i sum_{k != y_i} [1 + f_k]_+ ."""
    return float((masks * np.maximum(1.0 + F, 0.0)).sum() / masks.shape[0])


def surrogate_mean_loss(masks, F):
    return float((masks * _RAMP.value(1.0 + F)).sum() / masks.shape[0])


def ridge_value(rho, B):
    return 0.5 * rho * float((B ** 2).sum())


def _pieces(masks, F):
    z = 1.0 + F
    g = masks * _RAMP.gradient(z)
    c = masks * _RAMP.curvature(z)
    return g, c


def intercept_fit(offsets, masks, gamma=None, tol=1e-11, max_iter=100):
    """Constrained intercepts given per-class slope offsets (n, K)."""
    n, K = offsets.shape
    if gamma is None:
        gamma = np.zeros(K - 1)
    F = offsets + full_intercepts(gamma)[None, :]
    obj = surrogate_mean_loss(masks, F)
    for _ in range(max_iter):
        g, c = _pieces(masks, F)
        gm = g.mean(axis=0)
        cm = c.mean(axis=0)
        grad = gm[:-1] - gm[-1]
        H = np.diag(cm[:-1]) + cm[-1]
        H[np.diag_indices(K - 1)] += _JITTER
        step = np.linalg.solve(H, -grad)
        t, improved = 1.0, False
        for _ in range(40):
            cand = gamma + t * step
            Fc = offsets + full_intercepts(cand)[None, :]
            new = surrogate_mean_loss(masks, Fc)
            if new <= obj + 1e-14 * (1 + abs(obj)):
                improved = True
                break
            t *= 0.5
        if not improved:
            break
        gamma, F = cand, Fc
        done = abs(obj - new) <= tol * (1.0 + abs(obj))
        obj = new
        if done:
            break
    return gamma, obj


def newton_full(Xcols, masks, rho, init=None, tol=1e-10, max_iter=200):
    """Joint constrained fit over (gamma, free slope blocks) for Xcols.

    Returns (gamma, B (m, K) including the implied class, surrogate
    objective, iterations, converged)."""
    n, m = Xcols.shape
    K = masks.shape[1]
    nf = K - 1
    D = nf * (m + 1)
    if init is None:
        gamma, _ = intercept_fit(np.zeros((n, K)), masks)
        Bf = np.zeros((m, nf))
    else:
        gamma = init[0].copy()
        Bf = init[1][:, :nf].copy()

    def objective(gamma_, Bf_):
        F = scores(Xcols, full_intercepts(gamma_), full_slopes(Bf_))
        return (surrogate_mean_loss(masks, F)
                + ridge_value(rho, full_slopes(Bf_))), F

    obj, F = objective(gamma, Bf)
    converged, it = False, 0
    ones = np.ones((nf, nf))
    for it in range(1, max_iter + 1):
        g, c = _pieces(masks, F)
        grad = np.zeros(D)
        H = np.zeros((D, D))
        gm = g.mean(axis=0)
        cm = c.mean(axis=0)
        rowsum = Bf.sum(axis=1)
        for a in range(nf):
            ia = a * (m + 1)
            grad[ia] = gm[a] - gm[-1]
            grad[ia + 1:ia + 1 + m] = (Xcols.T @ (g[:, a] - g[:, -1]) / n
                                       + rho * (Bf[:, a] + rowsum))
            for b in range(a, nf):
                ib = b * (m + 1)
                ck = c[:, -1] + (c[:, a] if a == b else 0.0)
                H[ia, ib] = cm[-1] + (cm[a] if a == b else 0.0)
                blk = (Xcols * ck[:, None]).T @ Xcols / n
                blk[np.diag_indices(m)] += rho + (rho if a == b else 0.0)
                H[ia + 1:ia + 1 + m, ib + 1:ib + 1 + m] = blk
                cross = Xcols.T @ ck / n
                H[ia, ib + 1:ib + 1 + m] = cross
                H[ia + 1:ia + 1 + m, ib] = cross
                if a != b:
                    H[ib, ia + 1:ia + 1 + m] = cross
                    H[ib + 1:ib + 1 + m, ia] = cross
                    H[ib, ia] = H[ia, ib]
                    H[ib + 1:ib + 1 + m, ia + 1:ia + 1 + m] = blk
        H[np.diag_indices(D)] += _JITTER
        step = np.linalg.solve(H, -grad)
        t, improved = 1.0, False
        for _ in range(50):
            cand_g = gamma + t * step[[a * (m + 1) for a in range(nf)]]
            cand_B = Bf + t * np.column_stack(
                [step[a * (m + 1) + 1:(a + 1) * (m + 1)] for a in range(nf)])
            new, Fc = objective(cand_g, cand_B)
            if new <= obj + 1e-14 * (1 + abs(obj)):
                improved = True
                break
            t *= 0.5
        if not improved:
            converged = True
            break
        decrease = obj - new
        gamma, Bf, obj, F = cand_g, cand_B, new, Fc
        if decrease <= tol * (1.0 + abs(obj)):
            converged = True
            break
    return gamma, full_slopes(Bf), obj, it, converged


def scan_marginal(Xcols, masks, rho, offsets=None, tol=1e-7, max_iter=40):
    """Marginal utilities for each column, batched.

    Per column: free params gamma (K-1,) and slopes b (K-1,), class K
    implied.  offsets (n, K) hold frozen slope contributions for
    residual-substitute scans.  Returns exact utilities (hinge + ridge at the
    surrogate optimum), full intercepts and full slopes per column."""
    n, q = Xcols.shape
    K = masks.shape[1]
    nf = K - 1
    D = 2 * nf
    off = np.zeros((n, K)) if offsets is None else offsets
    gamma0, _ = intercept_fit(off, masks)
    G = np.tile(gamma0, (q, 1))          # (q, nf) intercepts
    Bs = np.zeros((q, nf))               # free slopes

    def f_scores(Gm, Bm, cols):
        b0 = np.concatenate([Gm, -Gm.sum(axis=1, keepdims=True)], axis=1)
        bs = np.concatenate([Bm, -Bm.sum(axis=1, keepdims=True)], axis=1)
        return off[:, None, :] + b0[None, :, :] + cols[:, :, None] * bs[None, :, :]

    def obj_of(Gm, Bm, cols):
        F = f_scores(Gm, Bm, cols)
        val = (masks[:, None, :] * _RAMP.value(1.0 + F)).sum(axis=2).mean(axis=0)
        rowsum = Bm.sum(axis=1)
        ridge = 0.5 * rho * ((Bm ** 2).sum(axis=1) + rowsum ** 2)
        return val + ridge, F

    live = np.arange(q)
    X_l = Xcols
    obj_l, F_l = obj_of(G, Bs, X_l)
    diag = np.arange(D)
    for _ in range(max_iter):
        Gm, Bm = G[live], Bs[live]
        z = 1.0 + F_l
        g = masks[:, None, :] * _RAMP.gradient(z)   # (n, L, K)
        c = masks[:, None, :] * _RAMP.curvature(z)
        gm = g.mean(axis=0)                          # (L, K)
        cm = c.mean(axis=0)
        gx = (g * X_l[:, :, None]).mean(axis=0)
        cx = (c * X_l[:, :, None]).mean(axis=0)
        cxx = (c * (X_l ** 2)[:, :, None]).mean(axis=0)
        L = live.size
        rowsum = Bm.sum(axis=1)
        grad = np.zeros((L, D))
        H = np.zeros((L, D, D))
        for a in range(nf):
            grad[:, a] = gm[:, a] - gm[:, -1]
            grad[:, nf + a] = gx[:, a] - gx[:, -1] + rho * (Bm[:, a] + rowsum)
            for b in range(a, nf):
                extra = cm[:, a] if a == b else 0.0
                H[:, a, b] = cm[:, -1] + extra
                hx = cx[:, -1] + (cx[:, a] if a == b else 0.0)
                H[:, a, nf + b] = hx
                H[:, nf + a, b] = hx
                hxx = (cxx[:, -1] + (cxx[:, a] if a == b else 0.0)
                       + rho * (2.0 if a == b else 1.0))
                H[:, nf + a, nf + b] = hxx
                if a != b:
                    H[:, b, a] = H[:, a, b]
                    H[:, b, nf + a] = hx
                    H[:, nf + b, a] = hx
                    H[:, nf + b, nf + a] = hxx
        H[:, diag, diag] += _JITTER
        step = np.linalg.solve(H, -grad[..., None])[..., 0]
        t = np.ones(L)
        for _ in range(40):
            Gc = Gm + t[:, None] * step[:, :nf]
            Bc = Bm + t[:, None] * step[:, nf:]
            obj_c, F_c = obj_of(Gc, Bc, X_l)
            worse = obj_c > obj_l + 1e-14 * (1 + np.abs(obj_l))
            if not np.any(worse):
                break
            t[worse] *= 0.5
        done = obj_l - obj_c <= tol * (1.0 + np.abs(obj_l))
        G[live], Bs[live] = Gc, Bc
        if np.all(done):
            break
        keep = ~done
        live = live[keep]
        X_l = X_l[:, keep]
        obj_l, F_l = obj_c[keep], F_c[:, keep, :]
    b0s = np.concatenate([G, -G.sum(axis=1, keepdims=True)], axis=1)
    bs = np.concatenate([Bs, -Bs.sum(axis=1, keepdims=True)], axis=1)
    F = off[:, None, :] + b0s[None, :, :] + Xcols[:, :, None] * bs[None, :, :]
    exact = (masks[:, None, :] * np.maximum(1.0 + F, 0.0)).sum(axis=2).mean(axis=0)
    exact = exact + 0.5 * rho * (bs ** 2).sum(axis=1)
    return exact, b0s, bs


def scan_conditional(Xfixed, Xfree, masks, rho, tol=1e-7, max_iter=40,
                     warm=None):
    """Conditional utilities: constrained joint over (gamma, per-free-class
    fixed block + scanned column), batched across free columns."""
    n, m = Xfixed.shape
    q = Xfree.shape[1]
    K = masks.shape[1]
    nf = K - 1
    mb = m + 2                     # per free class: intercept, fixed block, scanned
    D = nf * mb
    if warm is None:
        warm = newton_full(Xfixed, masks, rho)
    gamma_w, B_w = warm[0], warm[1]
    theta0 = np.zeros(D)
    for a in range(nf):
        theta0[a * mb] = gamma_w[a]
        theta0[a * mb + 1:a * mb + 1 + m] = B_w[:, a]
    Theta = np.tile(theta0, (q, 1))
    A = np.empty((n, m + 1))
    A[:, 0] = 1.0
    A[:, 1:] = Xfixed
    P = (A[:, :, None] * A[:, None, :]).reshape(n, (m + 1) * (m + 1))

    def f_scores(Th, cols):
        F = np.empty((n, Th.shape[0], K))
        tot = 0.0
        for a in range(nf):
            blk = Th[:, a * mb:(a + 1) * mb]
            fa = (A @ blk[:, :m + 1].T + cols * blk[:, m + 1][None, :])
            F[:, :, a] = fa
            tot = tot + fa
        F[:, :, -1] = -tot
        return F

    def slopes_of(Th):
        # (L, m+1, K) slope-and-scan coefficients incl. the implied class
        out = np.empty((Th.shape[0], m + 1, K))
        for a in range(nf):
            blk = Th[:, a * mb + 1:(a + 1) * mb]
            out[:, :, a] = blk
        out[:, :, -1] = -out[:, :, :nf].sum(axis=2)
        return out

    def obj_of(Th, cols):
        F = f_scores(Th, cols)
        val = (masks[:, None, :] * _RAMP.value(1.0 + F)).sum(axis=2).mean(axis=0)
        sl = slopes_of(Th)
        ridge = 0.5 * rho * (sl ** 2).sum(axis=(1, 2))
        return val + ridge, F

    live = np.arange(q)
    X_l = Xfree
    obj_l, F_l = obj_of(Theta, X_l)
    diag = np.arange(D)
    for _ in range(max_iter):
        Th = Theta[live]
        L = live.size
        z = 1.0 + F_l
        g = masks[:, None, :] * _RAMP.gradient(z)
        c = masks[:, None, :] * _RAMP.curvature(z)
        grad = np.zeros((L, D))
        H = np.zeros((L, D, D))
        sl = slopes_of(Th)
        rowsum = sl[:, :, :nf].sum(axis=2)
        for a in range(nf):
            ia = a * mb
            ga = g[:, :, a] - g[:, :, -1]          # (n, L)
            grad[:, ia:ia + m + 1] = ga.T @ A / n
            grad[:, ia + m + 1] = (ga * X_l).mean(axis=0)
            grad[:, ia + 1:ia + mb] += rho * (sl[:, :, a] + rowsum)
            for b in range(a, nf):
                ib = b * mb
                ck = c[:, :, -1] + (c[:, :, a] if a == b else 0.0)
                blk = (ck.T @ P).reshape(L, m + 1, m + 1) / n
                H[:, ia:ia + m + 1, ib:ib + m + 1] = blk
                cross = (ck * X_l).T @ A / n
                H[:, ia:ia + m + 1, ib + m + 1] = cross
                H[:, ia + m + 1, ib:ib + m + 1] = cross
                H[:, ia + m + 1, ib + m + 1] = (ck * X_l * X_l).mean(axis=0)
                ridge_diag = np.arange(1, mb)
                H[:, ia + ridge_diag, ib + ridge_diag] += \
                    rho * (2.0 if a == b else 1.0)
                if a != b:
                    H[:, ib:ib + m + 1, ia:ia + m + 1] = blk
                    H[:, ib:ib + m + 1, ia + m + 1] = cross
                    H[:, ib + m + 1, ia:ia + m + 1] = cross
                    H[:, ib + m + 1, ia + m + 1] = H[:, ia + m + 1, ib + m + 1]
        H[:, diag, diag] += _JITTER
        step = np.linalg.solve(H, -grad[..., None])[..., 0]
        t = np.ones(L)
        for _ in range(40):
            cand = Th + t[:, None] * step
            obj_c, F_c = obj_of(cand, X_l)
            worse = obj_c > obj_l + 1e-14 * (1 + np.abs(obj_l))
            if not np.any(worse):
                break
            t[worse] *= 0.5
        done = obj_l - obj_c <= tol * (1.0 + np.abs(obj_l))
        Theta[live] = cand
        if np.all(done):
            break
        live = live[~done]
        X_l = X_l[:, ~done]
        obj_l, F_l = obj_c[~done], F_c[:, ~done, :]
    # exact utilities over the full batch
    F = f_scores(Theta, Xfree)
    sl = slopes_of(Theta)
    exact = (masks[:, None, :] * np.maximum(1.0 + F, 0.0)).sum(axis=2).mean(axis=0)
    exact = exact + 0.5 * rho * (sl ** 2).sum(axis=(1, 2))
    return exact
