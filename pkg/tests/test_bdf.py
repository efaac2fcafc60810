import math
from fractions import Fraction

import numpy as np
import pytest

from savflows.bdf import (
    BdfTable,
    History,
    InsufficientHistoryError,
    bdf_table,
    combine_A,
    extrapolate_B,
)
from savflows.spectral import Field, Grid


class TestTables:
    def test_first_order(self):
        t = bdf_table(1)
        assert t.alpha == 1.0
        assert t.a_coeffs == (1.0,)
        assert t.b_coeffs == (1.0,)

    def test_second_order(self):
        t = bdf_table(2)
        assert t.alpha == 1.5
        assert t.a_coeffs == (2.0, -0.5)
        assert t.b_coeffs == (2.0, -1.0)

    def test_third_order(self):
        t = bdf_table(3)
        assert t.alpha == pytest.approx(11.0 / 6.0, abs=0)
        assert t.a_coeffs == (3.0, -1.5, pytest.approx(1.0 / 3.0, abs=1e-16))
        assert t.b_coeffs == (3.0, -3.0, 1.0)

    @pytest.mark.parametrize("k", [1, 2, 3, 4, 5])
    def test_consistency_sums(self, k):
        t = bdf_table(k)
        assert sum(t.a_coeffs) == pytest.approx(t.alpha, abs=1e-14)
        assert sum(t.b_coeffs) == pytest.approx(1.0, abs=1e-14)

    @pytest.mark.parametrize("k", [1, 2, 3, 4, 5])
    def test_taylor_exactness(self, k):
        # oracle: in exact rational arithmetic the implicit combination must
        # differentiate monomials t^0..t^k exactly at the new time level and
        # the extrapolation must reproduce t^0..t^{k-1} there
        t = bdf_table(k)
        a = [Fraction(c).limit_denominator(10 ** 6) for c in t.a_coeffs]
        b = [Fraction(c).limit_denominator(10 ** 6) for c in t.b_coeffs]
        alpha = Fraction(t.alpha).limit_denominator(10 ** 6)
        times = [Fraction(k - i) for i in range(k + 1)]  # t_{n+1}=k, newest first
        for j in range(k + 1):
            new = times[0] ** j
            hist = [ti ** j for ti in times[1:]]
            deriv = alpha * new - sum(ai * hi for ai, hi in zip(a, hist))
            assert deriv == j * times[0] ** max(j - 1, 0) * 1  # h = 1
        for j in range(k):
            hist = [ti ** j for ti in times[1:]]
            assert sum(bi * hi for bi, hi in zip(b, hist)) == times[0] ** j

    @pytest.mark.parametrize("k", [0, 6, -1])
    def test_rejects_bad_order(self, k):
        with pytest.raises(ValueError):
            bdf_table(k)


class TestHistory:
    def test_queries_fail_until_full(self):
        h = History(3)
        h.push(0.0, 1.0)
        with pytest.raises(InsufficientHistoryError):
            h.newest_first()
        assert h.newest_first(1) == [1.0]

    def test_strictly_increasing_times(self):
        h = History(2)
        h.push(0.0, 1.0)
        with pytest.raises(ValueError):
            h.push(0.0, 2.0)

    def test_ring_evicts_oldest(self):
        h = History(2)
        for i in range(4):
            h.push(float(i), i)
        assert h.newest_first() == [3, 2]
        assert h.latest_time() == 3.0


class TestCombinations:
    def setup_method(self):
        self.grid = Grid((1.0,), (8,))

    def fill(self, values, dt=0.1):
        h = History(len(values))
        for i, v in enumerate(values):
            h.push(i * dt, Field(self.grid, np.full(self.grid.shape, v)))
        return h

    def test_constant_history(self):
        for k in (1, 2, 3):
            t = bdf_table(k)
            h = self.fill([4.0] * k)
            assert np.allclose(combine_A(h, t).values, t.alpha * 4.0, atol=1e-14)
            assert np.allclose(extrapolate_B(h, t).values, 4.0, atol=1e-14)

    def test_linear_extrapolation_exact(self):
        dt = 0.25
        t = bdf_table(2)
        h = self.fill([0.0, dt], dt=dt)  # phi(t) = t
        assert np.allclose(extrapolate_B(h, t).values, 2 * dt, atol=1e-14)

    def test_quadratic_extrapolation_third_order(self):
        dt = 0.2
        t = bdf_table(3)
        h = self.fill([(i * dt) ** 2 for i in range(3)], dt=dt)
        target = (3 * dt) ** 2
        assert np.allclose(extrapolate_B(h, t).values, target, atol=1e-12)

    def test_insufficient_history(self):
        t = bdf_table(3)
        h = self.fill([1.0, 2.0])
        with pytest.raises(InsufficientHistoryError):
            combine_A(h, t)


def _measured_order(errors):
    return [math.log2(errors[i - 1] / errors[i]) for i in range(1, len(errors))]


@pytest.mark.parametrize("k", [1, 2, 3, 4, 5])
def test_implicit_combination_order(k):
    # (alpha*u_new - A(u))/h approximates u'(t_new) at order k on smooth data
    t = bdf_table(k)
    u, du = math.sin, math.cos
    errors = []
    for h in (0.02, 0.01, 0.005):
        t_new = 0.7
        hist = [u(t_new - (i + 1) * h) for i in range(k)]
        approx = (t.alpha * u(t_new)
                  - sum(a * v for a, v in zip(t.a_coeffs, hist))) / h
        errors.append(abs(approx - du(t_new)))
    for order in _measured_order(errors):
        assert order >= k - 0.35


@pytest.mark.parametrize("k", [1, 2, 3, 4, 5])
def test_extrapolation_order(k):
    t = bdf_table(k)
    u = math.sin
    errors = []
    for h in (0.02, 0.01, 0.005):
        t_new = 0.7
        hist = [u(t_new - (i + 1) * h) for i in range(k)]
        approx = sum(b * v for b, v in zip(t.b_coeffs, hist))
        errors.append(abs(approx - u(t_new)))
    for order in _measured_order(errors):
        assert order >= k - 0.35
