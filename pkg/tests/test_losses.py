import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from screenlab.losses import (LAD, Huber, Logistic, MultiHinge, Poisson,
                              Quadratic, loss_curvature_bound, loss_from_string,
                              loss_gradient, loss_value)

SCALAR_LOSSES = [Quadratic(), Logistic(), Poisson(), LAD(), Huber()]
SMOOTH_LOSSES = [Quadratic(), Logistic(), Poisson(), Huber()]


def _draw_y(loss, rng, size=None):
    if loss.name == "logistic":
        return np.asarray(rng.integers(0, 2, size=size)).astype(float)
    if loss.name == "poisson":
        return np.asarray(rng.poisson(3.0, size=size)).astype(float)
    return rng.standard_normal(size)


class TestValues:
    def test_logistic_at_zero(self):
        assert loss_value(Logistic(), 1.0, 0.0) == pytest.approx(math.log(2))

    def test_poisson_zero(self):
        assert loss_value(Poisson(), 0.0, 0.0) == pytest.approx(1.0)

    def test_multihinge_inactive(self):
        m = MultiHinge(4)
        v = loss_value(m, 2, np.array([-2.0, 0.0, -2.0, -2.0]))
        assert v == pytest.approx(0.0)

    def test_huber_linear_branch(self):
        # |r| = 3 beyond the knee delta=1: delta*|r| - delta^2/2 = 3 - 0.5
        assert loss_value(Huber(1.0), 0.0, 3.0) == pytest.approx(2.5)

    def test_quadratic(self):
        assert loss_value(Quadratic(), 1.0, 3.0) == pytest.approx(4.0)


class TestGradients:
    def test_logistic(self):
        assert loss_gradient(Logistic(), 1.0, 0.0) == pytest.approx(-0.5)

    def test_quadratic_minimizer(self):
        assert loss_gradient(Quadratic(), 2.0, 2.0) == pytest.approx(0.0)

    def test_poisson_frozen(self):
        # finite-difference oracle at (y=3, eta=1), 1e-6 step: e - 3
        got = loss_gradient(Poisson(), 3.0, 1.0)
        fd = (loss_value(Poisson(), 3.0, 1.0 + 1e-6)
              - loss_value(Poisson(), 3.0, 1.0 - 1e-6)) / 2e-6
        assert got == pytest.approx(math.e - 3.0, abs=1e-9)
        assert got == pytest.approx(fd, rel=1e-6)

    def test_lad_kink_returns_zero(self):
        assert loss_gradient(LAD(), 1.0, 1.0) == 0.0

    def test_hinge_kink_right_derivative(self):
        m = MultiHinge(3)
        g = loss_gradient(m, 1, np.array([0.0, -1.0, -2.0]))
        # off-class score exactly at the kink (1 + f = 0) uses slope 1
        np.testing.assert_allclose(g, [0.0, 1.0, 0.0])

    @pytest.mark.parametrize("loss", SMOOTH_LOSSES, ids=lambda m: m.name)
    def test_matches_finite_differences(self, loss):
        rng = np.random.default_rng(7)
        for _ in range(100):
            y = _draw_y(loss, rng)
            eta = rng.uniform(-3, 3)
            fd = (loss.value(y, eta + 1e-6) - loss.value(y, eta - 1e-6)) / 2e-6
            got = loss.gradient(y, np.asarray(eta))
            assert got == pytest.approx(fd, rel=1e-4, abs=1e-7)


class TestCurvature:
    def test_logistic_bound(self):
        assert loss_curvature_bound(Logistic(), 1.0, 5.0) == pytest.approx(0.25)

    def test_quadratic(self):
        assert loss_curvature_bound(Quadratic(), 0.0, 9.0) == pytest.approx(2.0)

    def test_poisson_second_difference(self):
        # second finite difference of e^eta at eta=2
        h = 1e-4
        fd2 = (loss_value(Poisson(), 1.0, 2 + h) - 2 * loss_value(Poisson(), 1.0, 2.0)
               + loss_value(Poisson(), 1.0, 2 - h)) / h ** 2
        got = loss_curvature_bound(Poisson(), 1.0, 2.0)
        assert got == pytest.approx(math.exp(2), rel=1e-9)
        assert got == pytest.approx(fd2, rel=1e-4)

    @pytest.mark.parametrize("loss", SMOOTH_LOSSES, ids=lambda m: m.name)
    def test_bounds_second_derivative(self, loss):
        rng = np.random.default_rng(11)
        for _ in range(50):
            y = _draw_y(loss, rng)
            eta = rng.uniform(-3, 3)
            h = 1e-5
            fd2 = (loss.value(y, eta + h) - 2 * loss.value(y, eta)
                   + loss.value(y, eta - h)) / h ** 2
            assert loss.curvature_bound(y, np.asarray(eta)) >= fd2 - 1e-3


class TestConvexity:
    @pytest.mark.parametrize("loss", SCALAR_LOSSES, ids=lambda m: m.name)
    @settings(max_examples=60, deadline=None)
    @given(eta1=st.floats(-8, 8), eta2=st.floats(-8, 8),
           t=st.floats(0, 1), seed=st.integers(0, 1000))
    def test_scalar_losses_convex(self, loss, eta1, eta2, t, seed):
        y = _draw_y(loss, np.random.default_rng(seed))
        mid = loss.value(y, t * eta1 + (1 - t) * eta2)
        assert mid <= (t * loss.value(y, eta1)
                       + (1 - t) * loss.value(y, eta2) + 1e-12)

    @settings(max_examples=40, deadline=None)
    @given(seed=st.integers(0, 1000), t=st.floats(0, 1))
    def test_multihinge_convex(self, seed, t):
        rng = np.random.default_rng(seed)
        m = MultiHinge(4)
        y = int(rng.integers(1, 5))
        f1, f2 = rng.uniform(-4, 4, 4), rng.uniform(-4, 4, 4)
        mid = m.value(y, t * f1 + (1 - t) * f2)
        assert mid <= t * m.value(y, f1) + (1 - t) * m.value(y, f2) + 1e-12


class TestMultiHinge:
    def test_zero_iff_margins_below_minus_one(self):
        m = MultiHinge(3)
        rng = np.random.default_rng(5)
        for _ in range(200):
            y = int(rng.integers(1, 4))
            f = rng.uniform(-3, 3, 3)
            off = [k for k in range(3) if k + 1 != y]
            is_zero = m.value(y, f) == 0.0
            assert is_zero == all(f[k] <= -1.0 for k in off)

    def test_label_range_checked(self):
        with pytest.raises(TypeError):
            loss_value(MultiHinge(3), 4, np.zeros(3))


class TestValidation:
    def test_logistic_rejects_nonbinary(self):
        with pytest.raises(TypeError):
            loss_value(Logistic(), 2.0, 0.0)

    def test_poisson_rejects_negative(self):
        with pytest.raises(TypeError):
            loss_value(Poisson(), -1.0, 0.0)

    def test_nonfinite_eta_rejected(self):
        with pytest.raises(ValueError):
            loss_value(Quadratic(), 0.0, np.inf)


class TestParsing:
    @pytest.mark.parametrize("spec,cls", [
        ("quadratic", Quadratic), ("logistic", Logistic), ("poisson", Poisson),
        ("lad", LAD), ("huber", Huber), ("huber:2.0", Huber),
        ("multihinge:4", MultiHinge),
    ])
    def test_round_trip(self, spec, cls):
        loss = loss_from_string(spec)
        assert isinstance(loss, cls)
        assert loss_from_string(loss.config_string()) == loss

    def test_defaults(self):
        assert loss_from_string("huber").delta == pytest.approx(1.345)

    def test_unknown(self):
        with pytest.raises(ValueError):
            loss_from_string("hinge")
        with pytest.raises(ValueError):
            loss_from_string("multihinge")
