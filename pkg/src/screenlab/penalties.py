"""Penalty families p_lambda(|beta|) and the tangent weights used by LLA."""

import numpy as np


class Penalty:
    """Base penalty; value() is the exact integral of derivative() from zero."""

    name = None
    folded_concave = True

    def __init__(self, lam=1.0):
        if lam < 0:
            raise ValueError("lambda must be nonnegative")
        self.lam = float(lam)

    def with_lambda(self, lam):
        out = type(self).__new__(type(self))
        out.__dict__.update(self.__dict__)
        out.lam = float(lam)
        return out

    def derivative(self, t):
        """p'_lambda evaluated at t = |beta| >= 0 (right limit at 0)."""
        raise NotImplementedError

    def value(self, t):
        raise NotImplementedError

    def lla_weights(self, beta):
        """Tangent-line weights w_j = p'(|beta_j|); all-lambda at beta = 0."""
        return self.derivative(np.abs(np.asarray(beta, dtype=float)))

    def config_string(self):
        return self.name

    def __repr__(self):
        return f"<Penalty {self.config_string()} lam={self.lam:g}>"


class L1(Penalty):
    name = "l1"
    folded_concave = False

    def derivative(self, t):
        return np.full_like(np.asarray(t, dtype=float), self.lam)

    def value(self, t):
        return self.lam * np.asarray(t, dtype=float)


class SCAD(Penalty):
    """Quadratic-spline penalty: constant slope lambda up to lambda, linear
    decay to zero at a*lambda, flat beyond."""

    name = "scad"

    def __init__(self, lam=1.0, a=3.7):
        super().__init__(lam)
        if not a > 2:
            raise ValueError("scad requires a > 2")
        self.a = float(a)

    def config_string(self):
        return f"scad:{self.a:g}"

    def derivative(self, t):
        t = np.asarray(t, dtype=float)
        lam, a = self.lam, self.a
        if lam == 0:
            return np.zeros_like(t)
        tail = np.maximum(a * lam - t, 0.0) / ((a - 1.0) * lam)
        return lam * np.where(t <= lam, 1.0, tail)

    def value(self, t):
        t = np.asarray(t, dtype=float)
        lam, a = self.lam, self.a
        mid = (2.0 * a * lam * t - t * t - lam * lam) / (2.0 * (a - 1.0))
        out = np.where(t <= lam, lam * t,
                       np.where(t <= a * lam, mid, 0.5 * (a + 1.0) * lam * lam))
        return out


class MCP(Penalty):
    name = "mcp"

    def __init__(self, lam=1.0, a=3.0):
        super().__init__(lam)
        if not a > 0:
            raise ValueError("mcp requires a > 0")
        self.a = float(a)

    def config_string(self):
        return f"mcp:{self.a:g}"

    def derivative(self, t):
        t = np.asarray(t, dtype=float)
        return np.maximum(self.lam - t / self.a, 0.0)

    def value(self, t):
        t = np.asarray(t, dtype=float)
        lam, a = self.lam, self.a
        return np.where(t <= a * lam, lam * t - t * t / (2.0 * a),
                        0.5 * a * lam * lam)


def adaptive_lasso_weights(beta_hat, lam, gamma=1.0, cap=1e6):
    """Experimental fourth weight rule, w_j = lam / |beta_hat_j|^gamma.

    Not used by default: zero is an absorbing state under iteration, unlike
    the folded-concave tangent weights.
    """
    b = np.abs(np.asarray(beta_hat, dtype=float))
    with np.errstate(divide="ignore"):
        w = lam / b ** gamma
    return np.minimum(w, cap)


def penalty_from_string(spec, lam=1.0):
    """Parse "l1" | "scad[:a]" | "mcp[:a]" into a Penalty."""
    spec = spec.strip().lower()
    head, _, arg = spec.partition(":")
    if head == "l1":
        if arg:
            raise ValueError("l1 takes no parameter")
        return L1(lam)
    if head == "scad":
        return SCAD(lam, float(arg)) if arg else SCAD(lam)
    if head == "mcp":
        return MCP(lam, float(arg)) if arg else MCP(lam)
    raise ValueError(f"unknown penalty {spec!r}")
