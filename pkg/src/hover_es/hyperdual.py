"""Hyper-dual numbers for exact first and second directional derivatives.

A hyper-dual number is a + b e1 + c e2 + d e1 e2 with e1^2 = e2^2 = 0. Evaluating
f at x + e1 u + e2 v yields f(x), Df u, Df v and D^2 f (u, v) in the four parts,
free of step-size and cancellation error. Parts may be complex, so a hyper-dual
evaluation can itself be differentiated by complex step.
"""

from __future__ import annotations

import cmath
import math

import numpy as np


def _atan(a):
    return cmath.atan(a) if isinstance(a, complex) else math.atan(a)


class HyperDual:
    __slots__ = ("a", "b", "c", "d")
    __array_ufunc__ = None  # numpy scalars defer to the reflected operators

    def __init__(self, a, b=0.0, c=0.0, d=0.0):
        self.a, self.b, self.c, self.d = a, b, c, d

    @staticmethod
    def _lift(v) -> "HyperDual":
        return v if isinstance(v, HyperDual) else HyperDual(v)

    def __add__(self, o):
        o = self._lift(o)
        return HyperDual(self.a + o.a, self.b + o.b, self.c + o.c, self.d + o.d)

    __radd__ = __add__

    def __neg__(self):
        return HyperDual(-self.a, -self.b, -self.c, -self.d)

    def __pos__(self):
        return self

    def __sub__(self, o):
        return self + (-self._lift(o))

    def __rsub__(self, o):
        return self._lift(o) + (-self)

    def __mul__(self, o):
        if not isinstance(o, HyperDual):
            return HyperDual(self.a * o, self.b * o, self.c * o, self.d * o)
        return HyperDual(self.a * o.a, self.a * o.b + self.b * o.a, self.a * o.c + self.c * o.a,
                         self.a * o.d + self.b * o.c + self.c * o.b + self.d * o.a)

    __rmul__ = __mul__

    def _apply(self, f0, f1, f2) -> "HyperDual":
        """g(self) from g(a), g'(a), g''(a)."""
        return HyperDual(f0, f1 * self.b, f1 * self.c, f1 * self.d + f2 * self.b * self.c)

    def reciprocal(self) -> "HyperDual":
        inv = 1.0 / self.a
        return self._apply(inv, -inv * inv, 2.0 * inv * inv * inv)

    def __truediv__(self, o):
        if not isinstance(o, HyperDual):
            return self * (1.0 / o)
        return self * o.reciprocal()

    def __rtruediv__(self, o):
        return self.reciprocal() * o

    def atan(self) -> "HyperDual":
        q = 1.0 / (1.0 + self.a * self.a)
        return self._apply(_atan(self.a), q, -2.0 * self.a * q * q)

    def __repr__(self):
        return f"HyperDual({self.a!r}, {self.b!r}, {self.c!r}, {self.d!r})"


def seed(x, u=None, v=None) -> np.ndarray:
    """Object array x + e1 u + e2 v."""
    x = np.asarray(x)
    u = np.zeros(x.shape) if u is None else np.asarray(u)
    v = np.zeros(x.shape) if v is None else np.asarray(v)
    return np.array([HyperDual(xi, ui, vi) for xi, ui, vi in zip(x, u, v)], dtype=object)


def parts(values) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Split a sequence of hyper-dual (or plain) numbers into its four part arrays."""
    cols = [[], [], [], []]
    for v in values:
        h = v if isinstance(v, HyperDual) else HyperDual(v)
        for col, p in zip(cols, (h.a, h.b, h.c, h.d)):
            col.append(p)
    return tuple(np.array(col) for col in cols)
