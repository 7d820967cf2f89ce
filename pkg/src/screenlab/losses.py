"""Loss families for the pseudo-likelihood objective mean_i L(y_i, eta_i).

Each family supplies the exact loss, its eta-gradient, a curvature upper
bound, and the internals the solver needs: a smooth fitting surrogate (equal
to the loss itself for the smooth families) and a per-observation
majorization curvature that makes the reweighted quadratic an upper bound of
the surrogate, so every solver step is a descent step.
"""

import numpy as np

# smoothing width of the fixed surrogates for the nonsmooth losses,
# on standardized-predictor scale
SURROGATE_MU = 1e-3

# eta is clipped to +-30 inside exp() while fitting Poisson models
POISSON_ETA_CLIP = 30.0

HUBER_DEFAULT_DELTA = 1.345


class LossModel:
    """Base class; subclasses are immutable value objects."""

    name = None
    smooth = True
    multiclass = False
    response_kinds = ("real",)

    # -- contract surface -------------------------------------------------

    def value(self, y, eta):
        """Exact per-observation loss, elementwise over broadcast (y, eta)."""
        raise NotImplementedError

    def gradient(self, y, eta):
        """d loss / d eta; fixed-selection subgradient at kinks."""
        raise NotImplementedError

    def curvature_bound(self, y, eta):
        """Valid local upper bound on the second eta-derivative."""
        raise NotImplementedError

    # -- solver internals --------------------------------------------------

    def fit_value(self, y, eta):
        """Surrogate optimized by the solver (the loss itself when smooth)."""
        return self.value(y, eta)

    def fit_gradient(self, y, eta):
        return self.gradient(y, eta)

    def fit_curvature(self, y, eta):
        """Per-observation majorization curvature at the current eta."""
        return self.curvature_bound(y, eta)

    # Poisson overrides this: its local curvature does not globally majorize,
    # so the solver adds step-halving.
    majorizer_is_global = True

    def validate_response(self, response):
        if response.kind not in self.response_kinds:
            raise TypeError(
                f"{self.name} loss needs a {'/'.join(self.response_kinds)} "
                f"response, got {response.kind}")

    def validate_y(self, y):
        """Entrywise response check for the pointwise operations."""

    def config_string(self):
        return self.name

    def __repr__(self):
        return f"<LossModel {self.config_string()}>"

    def __eq__(self, other):
        return type(self) is type(other) and self.config_string() == other.config_string()


class Quadratic(LossModel):
    name = "quadratic"
    response_kinds = ("real", "binary", "count")

    def value(self, y, eta):
        return (y - eta) ** 2

    def gradient(self, y, eta):
        return -2.0 * (y - eta)

    def curvature_bound(self, y, eta):
        return np.full_like(np.asarray(eta, dtype=float), 2.0)


class Logistic(LossModel):
    name = "logistic"
    response_kinds = ("binary",)
    majorizer_is_global = False

    def validate_y(self, y):
        if not np.all(np.isin(np.asarray(y), (0.0, 1.0))):
            raise TypeError("logistic loss needs responses in {0, 1}")

    def value(self, y, eta):
        # log(1+e^eta) - y*eta, computed stably on both tails
        return np.logaddexp(0.0, eta) - y * eta

    def gradient(self, y, eta):
        return _sigmoid(eta) - y

    def curvature_bound(self, y, eta):
        return np.full_like(np.asarray(eta, dtype=float), 0.25)

    def fit_curvature(self, y, eta):
        # IRLS curvature p(1-p); the global 0.25 bound stalls under
        # separation, so the solver pairs this with step-halving
        p = _sigmoid(eta)
        return np.maximum(p * (1.0 - p), 1e-6)


class Poisson(LossModel):
    name = "poisson"
    response_kinds = ("count",)
    majorizer_is_global = False

    def validate_y(self, y):
        if np.any(np.asarray(y) < 0):
            raise TypeError("poisson loss needs nonnegative responses")

    def value(self, y, eta):
        return np.exp(eta) - y * eta

    def gradient(self, y, eta):
        return np.exp(eta) - y

    def curvature_bound(self, y, eta):
        return np.exp(np.clip(eta, -POISSON_ETA_CLIP, POISSON_ETA_CLIP))

    def fit_value(self, y, eta):
        eta = np.clip(eta, -POISSON_ETA_CLIP, POISSON_ETA_CLIP)
        return np.exp(eta) - y * eta

    def fit_gradient(self, y, eta):
        return np.exp(np.clip(eta, -POISSON_ETA_CLIP, POISSON_ETA_CLIP)) - y

    def fit_curvature(self, y, eta):
        return np.maximum(self.curvature_bound(y, eta), 1e-10)


class LAD(LossModel):
    name = "lad"
    smooth = False
    response_kinds = ("real", "count")
    majorizer_is_global = False

    def value(self, y, eta):
        return np.abs(y - eta)

    def gradient(self, y, eta):
        return -np.sign(y - eta)

    def curvature_bound(self, y, eta):
        return np.full_like(np.asarray(eta, dtype=float), 1.0 / SURROGATE_MU)

    # fixed smooth surrogate: sqrt(r^2 + mu^2) - mu, within mu of |r|
    def fit_value(self, y, eta):
        r = y - eta
        return np.sqrt(r * r + SURROGATE_MU ** 2) - SURROGATE_MU

    def fit_gradient(self, y, eta):
        r = y - eta
        return -r / np.sqrt(r * r + SURROGATE_MU ** 2)

    def fit_curvature(self, y, eta):
        r2 = (y - eta) ** 2 + SURROGATE_MU ** 2
        return SURROGATE_MU ** 2 / (r2 * np.sqrt(r2))


class Huber(LossModel):
    smooth = True
    response_kinds = ("real", "count")

    def __init__(self, delta=HUBER_DEFAULT_DELTA):
        if not delta > 0:
            raise ValueError("huber delta must be positive")
        self.delta = float(delta)

    @property
    def name(self):
        return "huber"

    def config_string(self):
        return f"huber:{self.delta:g}"

    def value(self, y, eta):
        r = y - eta
        a = np.abs(r)
        return np.where(a <= self.delta, 0.5 * r * r,
                        self.delta * a - 0.5 * self.delta ** 2)

    def gradient(self, y, eta):
        return -np.clip(y - eta, -self.delta, self.delta)

    def curvature_bound(self, y, eta):
        return np.full_like(np.asarray(eta, dtype=float), 1.0)

    def fit_curvature(self, y, eta):
        # classical IRLS weight psi(r)/r, a global quadratic majorizer
        return np.minimum(1.0, self.delta / np.maximum(np.abs(y - eta), 1e-12))


class MultiHinge(LossModel):
    """Multicategory hinge: sum over off-classes of [1 + f_j]_+.

    eta is a length-K score vector per observation (array shape (..., K)).
    ridge is the coefficient on sum_k beta_jk^2 added to every fit for
    identifiability; the class-k piece of the loss involves only f_k, so
    multicategory fits decompose into K one-sided ramp fits.
    """

    smooth = False
    multiclass = True
    response_kinds = ("class",)

    def __init__(self, n_classes, ridge=0.5):
        if n_classes < 2:
            raise ValueError("multihinge needs at least 2 classes")
        if ridge < 0:
            raise ValueError("ridge must be nonnegative")
        self.n_classes = int(n_classes)
        self.ridge = float(ridge)

    @property
    def name(self):
        return "multihinge"

    def config_string(self):
        return f"multihinge:{self.n_classes}"

    def _offclass_mask(self, y, shape):
        y = np.asarray(y, dtype=int)
        k = np.arange(1, self.n_classes + 1)
        return y[..., None] != np.broadcast_to(k, shape)

    def value(self, y, eta):
        eta = np.asarray(eta, dtype=float)
        if eta.shape[-1] != self.n_classes:
            raise ValueError(f"eta must have {self.n_classes} scores per observation")
        off = self._offclass_mask(y, eta.shape)
        return np.sum(np.maximum(1.0 + eta, 0.0) * off, axis=-1)

    def gradient(self, y, eta):
        # right-derivative at the kink: 1 when 1 + f_j >= 0
        eta = np.asarray(eta, dtype=float)
        off = self._offclass_mask(y, eta.shape)
        return np.where((1.0 + eta >= 0.0) & off, 1.0, 0.0)

    def curvature_bound(self, y, eta):
        eta = np.asarray(eta, dtype=float)
        return np.full_like(eta, 0.25 / SURROGATE_MU)

    def validate_response(self, response):
        super().validate_response(response)
        if response.n_classes != self.n_classes:
            raise TypeError(
                f"loss expects {self.n_classes} classes, response has "
                f"{response.n_classes}")

    def validate_y(self, y):
        y = np.asarray(y)
        if np.any((y < 1) | (y > self.n_classes)):
            raise TypeError(f"labels must lie in 1..{self.n_classes}")


def _sigmoid(eta):
    # exp(-log(1 + e^-eta)), stable on both tails
    return np.exp(-np.logaddexp(0.0, -np.asarray(eta, dtype=float)))


class RampSurrogate:
    """Smoothed one-sided hinge z -> [z]_+ used inside multihinge fits.

    Scaled softplus mu*log(1 + e^(z/mu)): within mu*log(2) of the exact ramp
    everywhere, with smooth IRLS curvature sigma'(z/mu)/mu."""

    def __init__(self, mu=SURROGATE_MU):
        self.mu = mu

    def exact(self, z):
        return np.maximum(z, 0.0)

    def value(self, z):
        return self.mu * np.logaddexp(0.0, z / self.mu)

    def gradient(self, z):
        return _sigmoid(z / self.mu)

    def curvature(self, z):
        s = _sigmoid(z / self.mu)
        return np.maximum(s * (1.0 - s) / self.mu, 1e-9)


_SIMPLE = {"quadratic": Quadratic, "logistic": Logistic, "poisson": Poisson,
           "lad": LAD}


def loss_from_string(spec):
    """Parse a loss config string.

    Accepts "quadratic" | "logistic" | "poisson" | "lad" | "huber[:delta]" |
    "multihinge:K".
    """
    spec = spec.strip().lower()
    head, _, arg = spec.partition(":")
    if head in _SIMPLE:
        if arg:
            raise ValueError(f"loss {head!r} takes no parameter")
        return _SIMPLE[head]()
    if head == "huber":
        return Huber(float(arg)) if arg else Huber()
    if head == "multihinge":
        if not arg:
            raise ValueError("multihinge needs a class count, e.g. multihinge:4")
        return MultiHinge(int(arg))
    raise ValueError(f"unknown loss {spec!r}")


def loss_value(model, y, eta):
    """Loss of predicting y with linear predictor eta."""
    model_check_eta(eta)
    model.validate_y(y)
    return model.value(np.asarray(y, dtype=float) if not model.multiclass else y,
                       np.asarray(eta, dtype=float))


def loss_gradient(model, y, eta):
    model_check_eta(eta)
    model.validate_y(y)
    return model.gradient(np.asarray(y, dtype=float) if not model.multiclass else y,
                          np.asarray(eta, dtype=float))


def loss_curvature_bound(model, y, eta):
    model_check_eta(eta)
    model.validate_y(y)
    return model.curvature_bound(y, np.asarray(eta, dtype=float))


def model_check_eta(eta):
    if not np.all(np.isfinite(eta)):
        raise ValueError("linear predictor contains non-finite entries")
