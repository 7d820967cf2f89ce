import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from screenlab.penalties import (L1, MCP, SCAD, adaptive_lasso_weights,
                                 penalty_from_string)


class TestDerivative:
    def test_scad_inner_branch(self):
        assert SCAD(1.0, 3.7).derivative(0.5) == pytest.approx(1.0)

    def test_scad_tail_boundary(self):
        assert SCAD(1.0, 3.7).derivative(3.7) == pytest.approx(0.0)

    def test_scad_middle_branch(self):
        # (a*lam - t)/((a-1)*lam) * lam at t=2: 1.7/2.7
        assert SCAD(1.0, 3.7).derivative(2.0) == pytest.approx(1.7 / 2.7)

    def test_mcp(self):
        assert MCP(1.0, 2.0).derivative(1.0) == pytest.approx(0.5)

    def test_l1_constant(self):
        np.testing.assert_allclose(L1(2.0).derivative(np.array([0.0, 1.0, 9.0])),
                                   [2.0, 2.0, 2.0])

    @settings(max_examples=60, deadline=None)
    @given(lam=st.floats(0.01, 5), a=st.floats(2.1, 8),
           t1=st.floats(0, 10), t2=st.floats(0, 10))
    def test_scad_mcp_nonincreasing(self, lam, a, t1, t2):
        lo, hi = sorted((t1, t2))
        for pen in (SCAD(lam, a), MCP(lam, a)):
            assert pen.derivative(hi) <= pen.derivative(lo) + 1e-12

    def test_flat_tail(self):
        for pen in (SCAD(1.5, 3.7), MCP(1.5, 2.5)):
            t = pen.a * pen.lam
            assert pen.derivative(t) == pytest.approx(0.0, abs=1e-12)
            assert pen.derivative(t + 3.0) == 0.0


class TestValue:
    def test_l1(self):
        assert L1(2.0).value(3.0) == pytest.approx(6.0)

    def test_scad_saturation(self):
        # integral of the three branches: (a+1) lam^2 / 2
        assert SCAD(1.0, 3.7).value(100.0) == pytest.approx(2.35)

    def test_zero_at_zero(self):
        for pen in (L1(1.3), SCAD(1.3), MCP(1.3)):
            assert pen.value(0.0) == 0.0

    @pytest.mark.parametrize("pen", [SCAD(1.7, 3.7), MCP(1.7, 2.0)],
                             ids=["scad", "mcp"])
    def test_branch_continuity(self, pen):
        for t in (pen.lam, pen.a * pen.lam):
            below = pen.value(t - 1e-13)
            above = pen.value(t + 1e-13)
            assert abs(above - below) < 1e-12

    @pytest.mark.parametrize("pen", [SCAD(0.8), MCP(0.8), L1(0.8)],
                             ids=["scad", "mcp", "l1"])
    def test_value_integrates_derivative(self, pen):
        # trapezoid quadrature of the stated derivative reproduces value()
        for t in (0.3, 0.9, 2.0, 5.0):
            grid = np.linspace(0.0, t, 20001)
            quad = np.trapezoid(pen.derivative(grid), grid)
            assert pen.value(t) == pytest.approx(quad, abs=1e-6)

    @settings(max_examples=40, deadline=None)
    @given(lam=st.floats(0.01, 4), t1=st.floats(0, 10), t2=st.floats(0, 10))
    def test_nondecreasing(self, lam, t1, t2):
        lo, hi = sorted((t1, t2))
        for pen in (L1(lam), SCAD(lam), MCP(lam)):
            assert pen.value(hi) >= pen.value(lo) - 1e-12


class TestLlaWeights:
    def test_all_lambda_at_zero(self):
        for pen in (L1(1.4), SCAD(1.4), MCP(1.4)):
            np.testing.assert_allclose(pen.lla_weights(np.zeros(3)),
                                       [1.4, 1.4, 1.4])

    def test_scad_flat_tail_weight(self):
        np.testing.assert_allclose(SCAD(1.0, 3.7).lla_weights(np.array([5.0])),
                                   [0.0])

    def test_mcp_componentwise(self):
        np.testing.assert_allclose(MCP(1.0, 2.0).lla_weights(np.array([1.0, 3.0])),
                                   [0.5, 0.0])

    def test_adaptive_rule_caps(self):
        w = adaptive_lasso_weights(np.array([0.0, 2.0]), 1.0)
        assert w[0] == pytest.approx(1e6)
        assert w[1] == pytest.approx(0.5)


class TestParsing:
    def test_round_trip(self):
        assert isinstance(penalty_from_string("l1"), L1)
        assert penalty_from_string("scad").a == pytest.approx(3.7)
        assert penalty_from_string("scad:4.2").a == pytest.approx(4.2)
        assert penalty_from_string("mcp:2.5").a == pytest.approx(2.5)

    def test_invalid(self):
        with pytest.raises(ValueError):
            penalty_from_string("elastic")
        with pytest.raises(ValueError):
            SCAD(1.0, 2.0)
        with pytest.raises(ValueError):
            MCP(1.0, 0.0)
        with pytest.raises(ValueError):
            L1(-1.0)
