import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from hover_es.dynamics import abs_smooth
from hover_es.hyperdual import HyperDual, parts, seed


def f(x):
    return x * x * x / (1.0 + x * x) - 2.0 * (3.0 * x).atan()


def df(x):
    return (3 * x**2 * (1 + x**2) - 2 * x**4) / (1 + x**2) ** 2 - 6.0 / (1 + 9 * x**2)


class TestHyperDual:
    @given(st.floats(-5, 5))
    def test_scalar_derivatives(self, x):
        h = f(HyperDual(x, 1.0, 1.0, 0.0))
        assert h.b == pytest.approx(df(x), rel=1e-12, abs=1e-12)
        assert h.c == h.b
        # second derivative against a central difference of the exact first derivative
        eps = 1e-5
        fd = (df(x + eps) - df(x - eps)) / (2 * eps)
        assert h.d == pytest.approx(fd, rel=1e-6, abs=1e-6)

    def test_second_derivative_symbolic(self):
        import sympy as sp
        t = sp.Symbol("t")
        d2 = sp.diff(t**3 / (1 + t**2) - 2 * sp.atan(3 * t), t, 2)
        for x in (-2.0, 0.0, 0.7, 3.1):
            assert f(HyperDual(x, 1.0, 1.0)).d == pytest.approx(float(d2.subs(t, x)), rel=1e-12, abs=1e-14)

    def test_mixed_partial(self):
        x, y = seed([0.3, -1.1], [1.0, 0.0], [0.0, 1.0])
        h = x * x * y + y / x
        # d2/dxdy of x^2 y + y/x = 2x - 1/x^2
        assert h.d == pytest.approx(2 * 0.3 - 1 / 0.09, rel=1e-14)

    def test_reflected_ops_with_numpy_scalars(self):
        h = np.float64(2.0) * HyperDual(1.0, 1.0) - np.float64(1.0)
        assert isinstance(h, HyperDual) and (h.a, h.b) == (1.0, 2.0)
        h = np.float64(1.0) / HyperDual(2.0, 1.0)
        assert h.b == pytest.approx(-0.25)

    def test_smoothed_abs_derivatives(self):
        v, n = 0.013, 50
        h = abs_smooth(HyperDual(v, 1.0, 1.0), n)
        u = n * v
        d1 = 2 / math.pi * (math.atan(u) + u / (1 + u * u))
        d2 = 2 / math.pi * (2 * n / (1 + u * u) ** 2)
        assert h.a == pytest.approx(abs_smooth(v, n), rel=1e-15)
        assert h.b == pytest.approx(d1, rel=1e-13)
        assert h.d == pytest.approx(d2, rel=1e-13)

    def test_complex_parts(self):
        # complex step through a hyper-dual evaluation yields a third derivative
        hstep = 1e-30
        h = f(HyperDual(complex(0.4, hstep), 1.0, 1.0))
        eps = 1e-4
        fd = (f(HyperDual(0.4 + eps, 1.0, 1.0)).d - f(HyperDual(0.4 - eps, 1.0, 1.0)).d) / (2 * eps)
        assert h.d.imag / hstep == pytest.approx(fd, rel=1e-6)

    def test_parts_mixed(self):
        a, b, c, d = parts([HyperDual(1.0, 2.0, 3.0, 4.0), 5.0])
        np.testing.assert_array_equal(a, [1.0, 5.0])
        np.testing.assert_array_equal(d, [4.0, 0.0])
