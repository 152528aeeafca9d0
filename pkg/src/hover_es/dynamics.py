"""Open-loop 2-DOF flapping plant: vertical velocity w and flapping angle phi.

Sign convention follows the model equations: w is positive along gravity
(dw/dt = g - lift terms) and dz/dt = w, so z grows downward.
"""

from __future__ import annotations

import cmath
import math
from typing import NamedTuple

from .species import ModelCoefficients

DEFAULT_N_SMOOTH = 50


class PlantState(NamedTuple):
    z: float
    phi: float
    w: float
    phidot: float


def abs_smooth(v: float, n: float = DEFAULT_N_SMOOTH) -> float:
    """Smooth surrogate of |v|: v * (2/pi) * atan(n v).

    Complex arguments, and number types providing an ``atan`` method, are
    accepted so the smoothed field can be differentiated exactly.
    """
    if hasattr(v, "atan"):
        return v * (2.0 / math.pi) * (n * v).atan()
    atan = cmath.atan if isinstance(v, complex) else math.atan
    return v * (2.0 / math.pi) * atan(n * v)


def _rhs(x, tau: float, c: ModelCoefficients, abs_phidot: float) -> PlantState:
    z, phi, w, phidot = x[:4]
    wdot = c.g - c.k_d1 * abs_phidot * w - c.k_L * phidot * phidot
    phiddot = -c.k_d2 * abs_phidot * phidot - c.k_d3 * w * phidot + tau / c.I_F
    return PlantState(w, phidot, wdot, phiddot)


def plant_rhs(x, tau: float, coeffs: ModelCoefficients) -> PlantState:
    """Time derivative of (z, phi, w, phidot) under flapping torque ``tau``."""
    return _rhs(x, tau, coeffs, abs(x[3]))


def plant_rhs_smooth(x, tau: float, coeffs: ModelCoefficients,
                     n: float = DEFAULT_N_SMOOTH) -> PlantState:
    """As :func:`plant_rhs` with |phidot| replaced by :func:`abs_smooth`."""
    if n < 1:
        raise ValueError(f"smoothing order must be >= 1, got {n}")
    return _rhs(x, tau, coeffs, abs_smooth(x[3], n))


def hover_rate(coeffs: ModelCoefficients) -> float:
    """Flapping rate at which wing lift balances weight, sqrt(g/k_L)."""
    return math.sqrt(coeffs.g / coeffs.k_L)
