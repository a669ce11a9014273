"""Quadrature and fractional-calculus invariants."""
import math

import numpy as np
import pytest

from mixedfbm.errors import AccuracyWarning, DomainError, IllConditionedError
from mixedfbm.numerics import (
    beta_fn,
    frac_derivative_left,
    frac_derivative_right,
    frac_integral_right,
    gamma_fn,
    jacobi_rule,
    singular_integral,
    solve_dense,
)


class TestJacobiRule:
    @pytest.mark.parametrize("p,q", [
        (0.0, 0.0), (-0.5, 0.0), (0.0, -0.5), (-0.9, -0.9),
        (1.3, -0.4), (-0.6, 2.0), (2.5, 3.5),
    ])
    @pytest.mark.parametrize("a,b", [(0.0, 1.0), (0.3, 2.7)])
    def test_weight_sum_matches_beta(self, p, q, a, b):
        rule = jacobi_rule(48, p, q, a, b)
        exact = (b - a) ** (p + q + 1.0) * beta_fn(p + 1.0, q + 1.0)
        assert abs(rule.weights.sum() - exact) <= 1e-12 * exact

    def test_polynomial_exactness(self):
        # degree-7 polynomial must be integrated exactly by n=4
        f = lambda x: 3.0 * x ** 7 - x ** 3 + 2.0
        lo = jacobi_rule(4, -0.5, 0.3).apply(f)
        hi = jacobi_rule(64, -0.5, 0.3).apply(f)
        assert math.isclose(lo, hi, rel_tol=1e-13)

    def test_rule_unpacks(self):
        x, w = jacobi_rule(8, 0.0, 0.0)
        assert len(x) == 8 and len(w) == 8

    def test_domain_errors(self):
        with pytest.raises(DomainError):
            jacobi_rule(0, 0.0, 0.0)
        with pytest.raises(DomainError):
            jacobi_rule(8, -1.0, 0.0)
        with pytest.raises(DomainError):
            jacobi_rule(8, 0.0, 0.0, 1.0, 1.0)


class TestSingularIntegral:
    def test_algebraic_weight(self):
        # int_0^1 s^(-0.4) ds = 1/0.6 with the singularity in the weight
        val = singular_integral(lambda x: np.ones_like(x), 0.0, 1.0, p=-0.4)
        assert math.isclose(val, 1.0 / 0.6, rel_tol=1e-12)

    def test_smooth_integrand(self):
        val = singular_integral(np.cos, 0.0, 1.0)
        assert math.isclose(val, math.sin(1.0), rel_tol=1e-12)

    def test_interior_kink_warns(self):
        f = lambda x: np.abs(x - 1.0 / 3.0) ** 0.2
        with pytest.warns(AccuracyWarning):
            singular_integral(f, 0.0, 1.0, rtol=1e-14, n_cap=64)


class TestFractionalCalculus:
    def test_right_integral_power_rule(self):
        alpha, beta, v = 0.3, 0.45, 0.37
        f = lambda t: (1.0 - t) ** beta
        expect = (gamma_fn(beta + 1.0) / gamma_fn(alpha + beta + 1.0)
                  * (1.0 - v) ** (alpha + beta))
        # with the endpoint exponent declared the rule is exact
        got = frac_integral_right(f, alpha, v, q=beta)
        assert math.isclose(got, expect, rel_tol=1e-12)
        # without it, convergence is algebraic but still serviceable
        with pytest.warns(AccuracyWarning):
            got = frac_integral_right(f, alpha, v)
        assert math.isclose(got, expect, rel_tol=1e-6)

    def test_derivative_power_rules(self):
        alpha = 0.35
        got = frac_derivative_left(None, alpha, 0.6, power=0.8)
        expect = gamma_fn(1.8) / gamma_fn(1.8 - alpha) * 0.6 ** (0.8 - alpha)
        assert math.isclose(got, expect, rel_tol=1e-13)
        got = frac_derivative_right(None, alpha, 0.6, power_one_minus=0.8)
        expect = gamma_fn(1.8) / gamma_fn(1.8 - alpha) * 0.4 ** (0.8 - alpha)
        assert math.isclose(got, expect, rel_tol=1e-13)

    def test_derivative_inverts_integral(self):
        # D^a I^a f = f, both one-sided versions, numeric path throughout
        alpha = 0.4

        def right_int(y):
            return frac_integral_right(np.cos, alpha, float(y))

        g = lambda ys: np.array([right_int(y) for y in np.atleast_1d(ys)])
        got = frac_derivative_right(g, alpha, 0.4)
        assert abs(got - math.cos(0.4)) <= 1e-6

        def left_int(y):
            val = singular_integral(np.cos, 0.0, float(y), q=alpha - 1.0)
            return val / gamma_fn(alpha)

        g = lambda ys: np.array([left_int(y) for y in np.atleast_1d(ys)])
        got = frac_derivative_left(g, alpha, 0.4)
        assert abs(got - math.cos(0.4)) <= 1e-6

    def test_integration_by_parts(self):
        # int f D^a_{0+}g = int g D^a_{1-}f with numeric derivatives on one
        # side and power rules on the other
        alpha = 0.3
        f = lambda t: (1.0 - t) ** 1.9
        g = lambda t: t ** 1.8

        def dg(ts):
            return np.array([
                frac_derivative_left(g, alpha, float(t)) for t in np.atleast_1d(ts)
            ])

        # D^a g behaves like t^(1.8-a) at zero; declare it for clean
        # convergence of the outer rule
        lhs = singular_integral(
            lambda t: f(t) * dg(t) * t ** (alpha - 1.8), 0.0, 1.0,
            p=1.8 - alpha, n0=48, n_cap=96)
        ratio = gamma_fn(2.9) / gamma_fn(2.9 - alpha)
        rhs = singular_integral(lambda t: ratio * g(t), 0.0, 1.0, q=1.9 - alpha)
        assert abs(lhs - rhs) <= 1e-6 * abs(rhs)


class TestSolveDense:
    def test_well_conditioned(self):
        rng = np.random.default_rng(3)
        A = rng.normal(size=(40, 40)) + 40.0 * np.eye(40)
        b = rng.normal(size=40)
        x, cond = solve_dense(A, b)
        assert np.allclose(A @ x, b, rtol=0, atol=1e-10 * np.abs(b).max())
        assert cond < 1e4

    def test_ill_conditioned_raises(self):
        n = 14
        A = 1.0 / (np.arange(n)[:, None] + np.arange(n)[None, :] + 1.0)
        with pytest.raises(IllConditionedError):
            solve_dense(A, np.ones(n))

    def test_shape_guard(self):
        with pytest.raises(DomainError):
            solve_dense(np.ones((3, 4)), np.ones(3))
