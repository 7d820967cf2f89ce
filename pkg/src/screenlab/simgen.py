"""Generators for the benchmark simulation designs and their Bayes errors.

Three Gaussian covariance cases (independent; equicorrelated with a hidden
variable; the same plus a null variable) and two latent-uniform designs for
the four-class problem.  Correlated cases use an exact one-factor
construction: the hidden column is the common factor itself, every other
column is (factor + noise)/sqrt(2), which reproduces the 1/sqrt(2) and 1/2
correlations exactly in O(np).
"""

import math
from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial.hermite import hermgauss

from .data import Dataset, Response, _as_rng

CASES = ("case1", "case2", "case3", "multicat-case1", "multicat-case2")

# 0-based positions of the structural columns in the Gaussian cases
_HIDDEN = 3   # correlated 1/sqrt(2) with everything (x4 in 1-based notation)
_NULL = 4     # independent of everything in case3 (x5)


@dataclass(frozen=True)
class DesignSpec:
    p: int
    case: str = "case1"
    n: int = 100

    def __post_init__(self):
        if self.case not in CASES:
            raise ValueError(f"unknown design case {self.case!r}")
        if self.p < 1 or self.n < 2:
            raise ValueError("need p >= 1 and n >= 2")
        if self.case in ("case2", "case3") and self.p < 5:
            raise ValueError("correlated cases need p >= 5")
        if self.case.startswith("multicat") and self.p < 5:
            raise ValueError("multicategory cases need p >= 5")


@dataclass(frozen=True)
class ModelSpec:
    """Response model: family, intercept, sparse coefficients.

    family: "logistic" | "poisson" | "linear" | "multicat".
    beta maps 0-based column position to coefficient; multicat ignores beta
    and uses the fixed four-class score construction with slope a.
    """

    family: str
    beta0: float = 0.0
    beta: dict = field(default_factory=dict)
    sigma: float = 1.0                 # linear-family noise sd
    a: float = 5.0 / math.sqrt(3.0)    # multicat slope

    def support(self):
        if self.family == "multicat":
            # scores involve the four uniform latents, plus the mixing
            # latent's carrier column in the correlated design
            return np.arange(4)
        return np.array(sorted(j for j, b in self.beta.items() if b != 0.0),
                        dtype=int)

    def dense_beta(self, p):
        out = np.zeros(p)
        for j, b in self.beta.items():
            out[j] = b
        return out


@dataclass(frozen=True)
class DesignDraw:
    x: np.ndarray
    latents: np.ndarray = None   # multicat cases: the uniform latents


def case_correlation(case, i, j):
    """Population correlation of columns i and j (0-based) for a case."""
    if i == j:
        return 1.0
    if case == "case1":
        return 0.0
    if case == "case2":
        return 1.0 / math.sqrt(2.0) if _HIDDEN in (i, j) else 0.5
    if case == "case3":
        if _NULL in (i, j):
            return 0.0
        return 1.0 / math.sqrt(2.0) if _HIDDEN in (i, j) else 0.5
    raise ValueError(f"no closed-form correlation for case {case!r}")


def correlation_matrix(case, positions):
    positions = np.asarray(positions, dtype=int)
    k = positions.size
    out = np.empty((k, k))
    for a in range(k):
        for b in range(k):
            out[a, b] = case_correlation(case, positions[a], positions[b])
    return out


def gen_design(spec, rng):
    """Draw the n-by-p design for a DesignSpec."""
    gen = _as_rng(rng)
    n, p = spec.n, spec.p
    if spec.case == "case1":
        return DesignDraw(gen.standard_normal((n, p)))
    if spec.case in ("case2", "case3"):
        z = gen.standard_normal((n, p))
        f = gen.standard_normal(n)
        x = (z + f[:, None]) / math.sqrt(2.0)
        x[:, _HIDDEN] = f
        if spec.case == "case3":
            x[:, _NULL] = z[:, _NULL]
        return DesignDraw(x)
    # multicat: four uniform latents with unit variance, Gaussian rest
    lat = gen.uniform(-math.sqrt(3.0), math.sqrt(3.0), size=(n, 4))
    rest = gen.standard_normal((n, p - 4))
    if spec.case == "multicat-case1":
        return DesignDraw(np.column_stack([lat, rest]), latents=lat)
    # mixing design: x5's latent folds into the first four columns
    mix = rest[:, 0]
    signs = np.array([-1.0, 1.0, -1.0, 1.0])
    head = lat + math.sqrt(2.0) * signs[None, :] * mix[:, None]
    tail = math.sqrt(3.0) * rest
    return DesignDraw(np.column_stack([head, tail]), latents=lat)


def multicat_scores(latents, a):
    """Four class scores from the uniform latents (shape (n, 4))."""
    x1, x2, x3, x4 = latents.T
    return np.stack([-a * x1 + a * x4, a * x1 - a * x2,
                     a * x2 - a * x3, a * x3 - a * x4], axis=1)


def gen_response(draw, model, rng):
    """Draw the response for a generated design."""
    gen = _as_rng(rng)
    n = draw.x.shape[0]
    if model.family == "multicat":
        if draw.latents is None:
            raise ValueError("multicat response needs a latent design draw")
        f = multicat_scores(draw.latents, model.a)
        z = np.exp(f - f.max(axis=1, keepdims=True))
        probs = z / z.sum(axis=1, keepdims=True)
        u = gen.random(n)
        labels = 1 + (probs.cumsum(axis=1) < u[:, None]).sum(axis=1)
        return Response.class_label(labels, 4)
    eta = model.beta0 + draw.x @ model.dense_beta(draw.x.shape[1])
    if model.family == "logistic":
        pr = 1.0 / (1.0 + np.exp(-eta))
        return Response.binary((gen.random(n) < pr).astype(float))
    if model.family == "poisson":
        mu = np.exp(eta)
        if np.any(mu > 1e9):
            raise ValueError("Poisson mean exceeds 1e9; rescale beta0")
        return Response.count(gen.poisson(mu))
    if model.family == "linear":
        return Response.real(eta + model.sigma * gen.standard_normal(n))
    raise ValueError(f"unknown family {model.family!r}")


def gen_dataset(spec, model, rng):
    """Design plus response as an (unstandardized) Dataset."""
    draw = gen_design(spec, rng.spawn(0) if hasattr(rng, "spawn") else rng)
    y = gen_response(draw, model,
                     rng.spawn(1) if hasattr(rng, "spawn") else rng)
    return Dataset(draw.x, y)


# ---------------------------------------------------------------------------
# published coefficient presets


def _logistic_cases():
    s2 = math.sqrt(2.0)
    c1 = {0: 1.2439, 1: -1.3416, 2: -1.3500, 3: -1.7971, 4: -1.5810,
          5: -1.5967}
    c2 = {0: 4.0, 1: 4.0, 2: 4.0, 3: -6.0 * s2}
    c3 = {**c2, 4: 4.0 / 3.0}
    return c1, c2, c3


def _poisson_cases():
    s2 = math.sqrt(2.0)
    c1 = {0: -0.5423, 1: 0.5314, 2: -0.5012, 3: -0.4850, 4: -0.4133,
          5: 0.5234}
    c2 = {0: 0.6, 1: 0.6, 2: 0.6, 3: -0.9 * s2}
    c3 = {**c2, 4: 0.15}
    return c1, c2, c3


def _linear_case3():
    s2 = math.sqrt(2.0)
    return {0: 5.0, 1: 5.0, 2: 5.0, 3: -15.0 * s2 / 2.0, 4: 1.0}


def exaggerated_case2(j=60, a=1.0):
    """Stretched hidden-variable design: j active columns of size a, with
    the hidden column scaled to stay marginally independent of the
    response."""
    beta = {m: a for m in range(j) if m != _HIDDEN}
    beta[_HIDDEN] = -a * (j - 1) * math.sqrt(2.0) / 2.0
    return ModelSpec("logistic", 0.0, beta)


def random_logistic_coefs(n, count, rng):
    """Coefficient magnitudes (4 log n / sqrt(n) + |Z|/4) with random sign."""
    gen = _as_rng(rng)
    z = np.abs(gen.standard_normal(count)) / 4.0
    u = gen.choice([-1.0, 1.0], size=count)
    return (4.0 * math.log(n) / math.sqrt(n) + z) * u


def random_poisson_coefs(n, count, rng):
    """Coefficient magnitudes (log n / sqrt(n) + |Z|/8) with random sign."""
    gen = _as_rng(rng)
    z = np.abs(gen.standard_normal(count)) / 8.0
    u = gen.choice([-1.0, 1.0], size=count)
    return (math.log(n) / math.sqrt(n) + z) * u


@dataclass(frozen=True)
class Preset:
    name: str
    design: DesignSpec
    model: ModelSpec
    loss: str
    d: int
    var1_d: int
    tuning: str                 # harness default tuning rule
    desk_tuning: str = None

    def desk_rule(self):
        return self.desk_tuning or self.tuning


def _presets():
    lc1, lc2, lc3 = _logistic_cases()
    pc1, pc2, pc3 = _poisson_cases()
    out = {}
    for case, beta in (("case1", lc1), ("case2", lc2), ("case3", lc3)):
        out[f"logistic-{case}"] = Preset(
            f"logistic-{case}", DesignSpec(1000, case, 400),
            ModelSpec("logistic", 0.0, beta), "logistic",
            d=16, var1_d=66, tuning="tune")
    for case, beta in (("case1", pc1), ("case2", pc2), ("case3", pc3)):
        out[f"poisson-{case}"] = Preset(
            f"poisson-{case}", DesignSpec(1000, case, 200),
            ModelSpec("poisson", 5.0, beta), "poisson",
            d=37, var1_d=37, tuning="cv10", desk_tuning="cv5")
    out["linear-case3"] = Preset(
        "linear-case3", DesignSpec(1000, "case3", 70),
        ModelSpec("linear", 0.0, _linear_case3()), "quadratic",
        d=35, var1_d=35, tuning="bic")
    for case in ("multicat-case1", "multicat-case2"):
        out[case] = Preset(
            case, DesignSpec(1000, case, 400),
            ModelSpec("multicat"), "multihinge:4",
            d=16, var1_d=66, tuning="tune")
    out["null"] = Preset(
        "null", DesignSpec(1000, "case1", 100),
        ModelSpec("linear", 0.0, {}), "quadratic",
        d=21, var1_d=21, tuning="bic")
    return out


PRESETS = _presets()


def preset(name):
    try:
        return PRESETS[name]
    except KeyError:
        raise ValueError(f"unknown preset {name!r}; "
                         f"choose from {sorted(PRESETS)}") from None


def true_support(pre):
    """0-based positions of the truly active columns for a preset."""
    if pre.model.family == "multicat":
        if pre.design.case == "multicat-case2":
            return np.arange(5)   # the mixing latent makes x5 jointly active
        return np.arange(4)
    return pre.model.support()


# ---------------------------------------------------------------------------
# Bayes error


def bayes_error(model, spec, n_mc, rng, restricted_to=None, gh_nodes=80):
    """Monte Carlo Bayes misclassification rate from the true conditional
    class probabilities.

    restricted_to limits the classifier to a column subset: the conditional
    law of the linear signal given those columns is Gaussian, and the inner
    posterior expectation is a Gauss-Hermite quadrature.  Classification
    families only.
    """
    gen = _as_rng(rng)
    if model.family == "multicat":
        if restricted_to is not None:
            raise ValueError("restricted Bayes error implemented for the "
                             "logistic family only")
        lat = gen.uniform(-math.sqrt(3.0), math.sqrt(3.0), size=(n_mc, 4))
        f = multicat_scores(lat, model.a)
        z = np.exp(f - f.max(axis=1, keepdims=True))
        probs = z / z.sum(axis=1, keepdims=True)
        draws = 1.0 - probs.max(axis=1)
        return float(draws.mean()), float(draws.std(ddof=1) / math.sqrt(n_mc))
    if model.family != "logistic":
        raise ValueError("Bayes error defined for classification only")
    support = model.support()
    beta_s = np.array([model.beta[j] for j in support])
    sigma_full = correlation_matrix(spec.case, support)
    sig2 = float(beta_s @ sigma_full @ beta_s)
    if restricted_to is None:
        eta = model.beta0 + gen.standard_normal(n_mc) * math.sqrt(sig2)
        pr = 1.0 / (1.0 + np.exp(-eta))
        draws = np.minimum(pr, 1.0 - pr)
        return float(draws.mean()), float(draws.std(ddof=1) / math.sqrt(n_mc))
    keep = np.asarray(restricted_to, dtype=int)
    sigma_kk = correlation_matrix(spec.case, keep)
    c = np.array([sum(case_correlation(spec.case, i, j) * model.beta[j]
                      for j in support) for i in keep])
    w = np.linalg.solve(sigma_kk, c)
    s2 = float(c @ w)
    v = max(sig2 - s2, 0.0)
    xk = gen.standard_normal((n_mc, keep.size)) @ np.linalg.cholesky(sigma_kk).T
    m = model.beta0 + xk @ w
    nodes, wts = hermgauss(gh_nodes)
    z = math.sqrt(2.0) * nodes
    wts = wts / math.sqrt(math.pi)
    pr = (1.0 / (1.0 + np.exp(-(m[:, None] + math.sqrt(v) * z[None, :])))) @ wts
    draws = np.minimum(pr, 1.0 - pr)
    return float(draws.mean()), float(draws.std(ddof=1) / math.sqrt(n_mc))
