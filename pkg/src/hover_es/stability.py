"""Averaged-system stability of the smoothed closed loop.

The closed loop is control affine, x' = Z(x) + G(x) a Omega cos(Omega t). Its
high-frequency average is x' = Z + (a^2/4) [G, [G, Z]], with the bracket
[f, g] = (dg/dx) f - (df/dx) g. Since z and phi never feed back into the
other states, equilibria and eigenvalues are computed on the reduced state
(w, phidot, tau_hat) with z = phi = 0.

Derivatives are numerical so the module stays agnostic of the model: any
field built from arithmetic and the smoothed absolute value can be used.
Plain brackets use central differences. The nested bracket needs second
derivatives, and differencing there loses the w row to roundoff against g
(near phidot = 0 the lift change over a step is below eps*g). It is instead
assembled from exact first and second directional derivatives obtained by
evaluating the fields on hyper-dual numbers:

    [G,[G,Z]] = D2Z(G,G) + DZ(DG G) - D2G(Z,G) - DG(DZ G) - DG [G,Z].

The central-difference route stays available as a cross-check.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Optional, Sequence

import numpy as np

from . import hyperdual
from .esc import EscConfig, affine_decomposition
from .species import ModelCoefficients, Species

Field = Callable[[np.ndarray], np.ndarray]

NESTED_REL_STEP = 1e-4
JACOBIAN_REL_STEP = 1e-4
NEWTON_TOL = 1e-10
MAX_NEWTON_ITER = 200
ILL_CONDITIONED = 1e12


class APlacement(str, Enum):
    SQUARED = "squared"   # correction (a^2/4)[G,[G,Z]]
    LITERAL = "literal"   # correction (a^2/4)[aG,[aG,Z]], i.e. a^4/4


class Verdict(str, Enum):
    STABLE = "stable"
    MARGINAL = "marginal"
    UNSTABLE = "unstable"


class NoEquilibriumFound(RuntimeError):
    def __init__(self, message: str, best_residual: float = math.inf):
        super().__init__(message)
        self.best_residual = best_residual


# ---------------------------------------------------------------- derivatives

def default_steps(x: np.ndarray) -> np.ndarray:
    """Per-component step max(1e-6 |x_i|, 1e-9)."""
    return np.maximum(1e-6 * np.abs(x), 1e-9)


def scaled_steps(floor: Sequence[float], rel: float) -> Callable[[np.ndarray], np.ndarray]:
    """Step rule rel * max(|x_i|, floor_i), on the real part of x."""
    floor = np.asarray(floor, dtype=float)
    return lambda x: rel * np.maximum(np.abs(np.real(x)), floor)


def _as_state(x) -> np.ndarray:
    x = np.asarray(x)
    return x if np.iscomplexobj(x) else x.astype(float)


def jacobian(f: Field, x, steps=None) -> np.ndarray:
    """Central-difference Jacobian; ``steps`` is an array or a rule x -> array.

    Complex states are differenced in complex arithmetic with real steps, so
    the result can itself be differentiated by complex step.
    """
    x = _as_state(x)
    if steps is None:
        steps = default_steps
    h = steps(np.real(x)) if callable(steps) else np.broadcast_to(np.asarray(steps, dtype=float), x.shape)
    cols = []
    for i in range(x.size):
        xp = x.copy()
        xm = x.copy()
        xp[i] += h[i]
        xm[i] -= h[i]
        cols.append((np.asarray(f(xp)) - np.asarray(f(xm))) / (xp[i] - xm[i]).real)
    return np.column_stack(cols)


def complex_step_jacobian(f: Field, x, h: float = 1e-30) -> np.ndarray:
    """Jacobian from Im f(x + i h e_k) / h; ``f`` must be complex analytic."""
    x = np.asarray(x, dtype=float)
    cols = []
    for i in range(x.size):
        xc = x.astype(complex)
        xc[i] += 1j * h
        cols.append(np.imag(np.asarray(f(xc))) / h)
    return np.column_stack(cols)


def lie_bracket(f: Field, g: Field, x, steps=None, method: str = "central") -> np.ndarray:
    """[f, g](x) = (dg/dx) f(x) - (df/dx) g(x).

    ``method`` is "central" (finite differences with ``steps``) or "complex"
    (complex step; both fields must accept complex states). A complex ``x``
    is only meaningful with "central", to be differentiated by complex step.
    """
    x = _as_state(x)
    if method == "central":
        jf, jg = jacobian(f, x, steps), jacobian(g, x, steps)
    elif method == "complex":
        jf, jg = complex_step_jacobian(f, x), complex_step_jacobian(g, x)
    else:
        raise ValueError(f"unknown differentiation method {method!r}")
    fx, gx = np.asarray(f(x)), np.asarray(g(x))
    if not np.iscomplexobj(x):
        fx, gx = fx.real, gx.real
    return jg @ fx - jf @ gx


# ---------------------------------------------------------------- averaged field

def _coeffs(model) -> ModelCoefficients:
    return model.coefficients if isinstance(model, Species) else model


def natural_scales(coeffs: ModelCoefficients, cfg: EscConfig) -> np.ndarray:
    """Size below which each state coordinate is treated as zero when differencing."""
    hover_torque = coeffs.k_d2 * coeffs.I_F * coeffs.g / coeffs.k_L
    return np.array([1e-2, 1e-2, 1e-1, 1.0 / cfg.n_smooth, hover_torque])


def row_scales(coeffs: ModelCoefficients, cfg: EscConfig) -> np.ndarray:
    """Magnitudes used to make the reduced residual dimensionless."""
    drive = cfg.a * cfg.Omega
    return np.array([coeffs.g, max(drive / coeffs.I_F, coeffs.g),
                     max(abs(cfg.K) * drive * cfg.tauhat_gain(coeffs), 1e-300)])


def averaged_field(x, model, cfg: EscConfig, a_placement=APlacement.SQUARED,
                   method: str = "hyperdual") -> np.ndarray:
    """Averaged vector field Z + (a^2/4)[G,[G,Z]] of the smoothed closed loop."""
    c = _coeffs(model)
    x = _as_state(x)
    Z = affine_decomposition(x, cfg, c, smoothed=True)[0]
    if cfg.a == 0.0:
        return Z
    return Z + bracket_correction(x, c, cfg, a_placement, method)


def nested_bracket(G: Field, Z: Field, x) -> np.ndarray:
    """[G,[G,Z]](x) from hyper-dual directional derivatives (fields must accept them)."""

    def along(f, u, v=None):
        return hyperdual.parts(f(hyperdual.seed(x, u, v)))

    Zx, dZ_G, _, d2Z_GG = along(Z, G(x), G(x))
    Gx, dG_Z, dG_G, d2G_ZG = along(G, Z(x), G(x))
    inner = dZ_G - dG_Z
    dZ_dGG = along(Z, dG_G)[1]
    dG_dZG = along(G, dZ_G)[1]
    dG_inner = along(G, inner)[1]
    return d2Z_GG + dZ_dGG - d2G_ZG - dG_dZG - dG_inner


def nested_bracket_central(G: Field, Z: Field, x, steps=None) -> np.ndarray:
    """[G,[G,Z]](x) by stacked central differences; a cross-check, noisy near rest."""
    inner = lambda y: lie_bracket(G, Z, y, steps)  # noqa: E731
    return lie_bracket(G, inner, x, steps)


def bracket_correction(x, model, cfg: EscConfig, a_placement=APlacement.SQUARED,
                       method: str = "hyperdual", rel_step: float = NESTED_REL_STEP) -> np.ndarray:
    """The averaging correction (a^2/4)[G,[G,Z]] alone.

    ``method`` is "hyperdual" (exact derivatives) or "central" (stacked
    differences with steps rel_step * max(|x_i|, natural scale_i)).
    """
    c = _coeffs(model)
    x = _as_state(x)
    scale = 1.0 if APlacement(a_placement) is APlacement.SQUARED else cfg.a

    def drift(y):
        return affine_decomposition(y, cfg, c, smoothed=True)[0]

    def direction(y):
        return scale * affine_decomposition(y, cfg, c, smoothed=True)[1]

    if method == "hyperdual":
        br = nested_bracket(direction, drift, x)
    elif method == "central":
        br = nested_bracket_central(direction, drift, x, scaled_steps(natural_scales(c, cfg), rel_step))
    else:
        raise ValueError(f"unknown differentiation method {method!r}")
    return 0.25 * cfg.a ** 2 * br


def reduced_field(model, cfg: EscConfig, a_placement=APlacement.SQUARED) -> Field:
    """(w, phidot, tau_hat) -> last three rows of the averaged field at z = phi = 0."""
    c = _coeffs(model)

    def f(y):
        return averaged_field(np.array([0.0, 0.0, y[0], y[1], y[2]]), c, cfg, a_placement)[2:]

    return f


# ---------------------------------------------------------------- equilibria

@dataclass
class Equilibrium:
    state: np.ndarray
    residual_norm: float
    seed: tuple
    iterations: int


def seed_grid(coeffs: ModelCoefficients, cfg: EscConfig) -> list[tuple]:
    """Zero seed first, then sign-symmetric seeds around the hover flapping rate."""
    rate = math.sqrt(coeffs.g / coeffs.k_L)
    torque = coeffs.k_d2 * coeffs.I_F * coeffs.g / coeffs.k_L
    seeds = [(0.0, 0.0, 0.0)]
    for frac in (1.0, 0.5):
        for sgn in (1.0, -1.0):
            for th in (0.0, sgn * torque):
                seeds.append((0.0, sgn * frac * rate, th))
    return seeds


def _newton(f: Field, y0, scales: np.ndarray, floor: np.ndarray, tol: float, max_iter: int):
    y = np.array(y0, dtype=float)
    r = f(y) / scales
    res = float(np.max(np.abs(r)))
    steps = scaled_steps(floor, JACOBIAN_REL_STEP)
    for it in range(max_iter):
        if not math.isfinite(res):
            return y, res, it
        if res < tol:
            return y, res, it
        J = jacobian(f, y, steps) / scales[:, None]
        dy = np.linalg.lstsq(J, -r, rcond=None)[0]
        lam = 1.0
        for _ in range(40):
            y_try = y + lam * dy
            r_try = f(y_try) / scales
            res_try = float(np.max(np.abs(r_try)))
            if math.isfinite(res_try) and res_try < res:
                break
            lam *= 0.5
        else:
            return y, res, it  # no descent: stagnated
        y, r, res = y_try, r_try, res_try
    return y, res, max_iter


def find_equilibrium(model, cfg: EscConfig, guess=None, a_placement=APlacement.SQUARED,
                     tol: float = NEWTON_TOL, max_iter: int = MAX_NEWTON_ITER,
                     seeds: Optional[Sequence] = None) -> Equilibrium:
    """Damped Newton on the reduced averaged field over a seed list.

    ``guess`` (if given) is tried before the seeds, which default to
    :func:`seed_grid`. Raises NoEquilibriumFound with the best residual when
    no seed converges.
    """
    c = _coeffs(model)
    f = reduced_field(c, cfg, a_placement)
    scales = row_scales(c, cfg)
    floor = natural_scales(c, cfg)[2:]
    seeds = list(seed_grid(c, cfg) if seeds is None else seeds)
    if guess is not None:
        seeds.insert(0, tuple(map(float, guess)))
    best = math.inf
    for seed in seeds:
        y, res, it = _newton(f, seed, scales, floor, tol, max_iter)
        if res < tol:
            return Equilibrium(y, res, seed, it)
        best = min(best, res)
    raise NoEquilibriumFound(f"no seed converged; best scaled residual {best:.3g}", best)


# ---------------------------------------------------------------- eigenvalues

def characteristic_coefficients(A) -> tuple[float, float, float]:
    """(b, c, d) with det(lambda I - A) = lambda^3 + b lambda^2 + c lambda + d."""
    A = np.asarray(A, dtype=float)
    tr = A[0, 0] + A[1, 1] + A[2, 2]
    minors = (A[0, 0] * A[1, 1] - A[0, 1] * A[1, 0]
              + A[0, 0] * A[2, 2] - A[0, 2] * A[2, 0]
              + A[1, 1] * A[2, 2] - A[1, 2] * A[2, 1])
    return -tr, minors, -float(np.linalg.det(A))


def _poly(b, c, d, z):
    return ((z + b) * z + c) * z + d


def _dpoly(b, c, z):
    return (3 * z + 2 * b) * z + c


def cubic_roots(b: float, c: float, d: float) -> list[complex]:
    """Roots of z^3 + b z^2 + c z + d by Cardano's formula, Newton-polished."""
    shift = b / 3.0
    p = c - b * shift
    q = 2.0 * shift ** 3 - c * shift + d
    disc = (q / 2.0) ** 2 + (p / 3.0) ** 3
    if p == 0.0 and q == 0.0:
        t = [0.0, 0.0, 0.0]
    elif disc < 0.0:  # three distinct real roots
        m = 2.0 * math.sqrt(-p / 3.0)
        arg = max(-1.0, min(1.0, 3.0 * q / (p * m)))
        theta = math.acos(arg) / 3.0
        t = [m * math.cos(theta - 2.0 * math.pi * k / 3.0) for k in range(3)]
    else:
        s = math.sqrt(disc)
        big = -q / 2.0 - math.copysign(s, q)  # no cancellation
        u = math.copysign(abs(big) ** (1.0 / 3.0), big)
        v = -p / (3.0 * u) if u != 0.0 else 0.0
        re = -(u + v) / 2.0
        im = math.sqrt(3.0) / 2.0 * (u - v)
        t = [u + v, complex(re, im), complex(re, -im)]
    roots = []
    for ti in t:
        z = complex(ti) - shift
        for _ in range(3):
            dp = _dpoly(b, c, z)
            if dp == 0:
                break
            z_new = z - _poly(b, c, d, z) / dp
            if abs(_poly(b, c, d, z_new)) >= abs(_poly(b, c, d, z)):
                break
            z = z_new
        roots.append(z)
    # conjugate pairs stay exact conjugates; real roots stay real
    if isinstance(t[1], complex):
        roots[0] = complex(roots[0].real, 0.0)
        roots[2] = roots[1].conjugate()
    else:
        roots = [complex(r.real, 0.0) for r in roots]
    return sorted(roots, key=lambda z: (z.real, z.imag))


def companion_roots(b: float, c: float, d: float) -> list[complex]:
    comp = np.array([[0.0, 0.0, -d], [1.0, 0.0, -c], [0.0, 1.0, -b]])
    return sorted((complex(z) for z in np.linalg.eigvals(comp)), key=lambda z: (z.real, z.imag))


def cubic_eigenvalues(A) -> list[complex]:
    return cubic_roots(*characteristic_coefficients(A))


def match_roots(r1: Sequence[complex], r2: Sequence[complex]) -> float:
    """Largest relative distance max|a-b|/max(1,|a|) under the best pairing."""
    from itertools import permutations
    best = math.inf
    for perm in permutations(r2):
        err = max(abs(a - b) / max(1.0, abs(a)) for a, b in zip(r1, perm))
        best = min(best, err)
    return best


def polynomial_residual(b, c, d, z: complex) -> float:
    """|p(z)| relative to the magnitude of its terms."""
    mag = abs(z) ** 3 + abs(b) * abs(z) ** 2 + abs(c) * abs(z) + abs(d)
    return abs(_poly(b, c, d, z)) / mag if mag else 0.0


def verdict_of(eigs: Sequence[complex], rel_tol: float = 1e-9) -> Verdict:
    """Stable when every real part is negative beyond roundoff of the largest eigenvalue."""
    tol = rel_tol * max(abs(z) for z in eigs) if eigs else 0.0
    if all(z.real < -tol for z in eigs):
        return Verdict.STABLE
    if any(z.real > tol for z in eigs):
        return Verdict.UNSTABLE
    return Verdict.MARGINAL


# ---------------------------------------------------------------- report

@dataclass
class StabilityReport:
    species: str
    objective: str
    equilibrium: tuple
    residual_norm: float
    jacobian: np.ndarray
    eigenvalues: list
    verdict: Verdict
    n_smooth: int
    a_placement: str = APlacement.SQUARED.value
    tauhat_law: str = "torque"
    seed: tuple = ()
    condition_number: float = math.nan
    ill_conditioned: bool = False
    companion_eigenvalues: list = field(default_factory=list)
    companion_mismatch: float = 0.0
    jacobian_mismatch: float = 0.0

    def to_dict(self) -> dict:
        def num(v):
            return float(v) if math.isfinite(v) else None

        return {
            "species": self.species,
            "objective": self.objective,
            "equilibrium": {"w": self.equilibrium[0], "phidot": self.equilibrium[1],
                            "tauhat": self.equilibrium[2]},
            "residual_norm": self.residual_norm,
            "jacobian": [float(v) for v in np.asarray(self.jacobian).ravel()],
            "eigenvalues": [{"re": z.real, "im": z.imag} for z in self.eigenvalues],
            "verdict": self.verdict.value,
            "n_smooth": self.n_smooth,
            "a_placement": self.a_placement,
            "tauhat_law": self.tauhat_law,
            "seed": list(self.seed),
            "condition_number": num(self.condition_number),
            "ill_conditioned": self.ill_conditioned,
            "companion_mismatch": self.companion_mismatch,
            "jacobian_mismatch": self.jacobian_mismatch,
        }


def analyze(species: Species, cfg: EscConfig, a_placement=APlacement.SQUARED,
            guess=None) -> StabilityReport:
    """Equilibrium, reduced Jacobian, eigenvalues and verdict for one configuration."""
    a_placement = APlacement(a_placement)
    c = species.coefficients
    eq = find_equilibrium(c, cfg, guess, a_placement)
    f = reduced_field(c, cfg, a_placement)
    J = jacobian(f, eq.state, scaled_steps(natural_scales(c, cfg)[2:], JACOBIAN_REL_STEP))
    J_cs = complex_step_jacobian(f, eq.state)  # independent route
    b, cc, d = characteristic_coefficients(J)
    eigs = cubic_roots(b, cc, d)
    comp = companion_roots(b, cc, d)
    with np.errstate(all="ignore"):
        cond = float(np.linalg.cond(J))
    return StabilityReport(
        species=species.name,
        objective=cfg.objective.value,
        equilibrium=tuple(float(v) for v in eq.state),
        residual_norm=eq.residual_norm,
        jacobian=J,
        eigenvalues=eigs,
        verdict=verdict_of(eigs),
        n_smooth=int(cfg.n_smooth),
        a_placement=a_placement.value,
        tauhat_law=cfg.tauhat_law.value,
        seed=eq.seed,
        condition_number=cond,
        ill_conditioned=not (cond <= ILL_CONDITIONED),
        companion_eigenvalues=comp,
        companion_mismatch=match_roots(eigs, comp),
        jacobian_mismatch=float(np.max(np.abs(J - J_cs)) / np.max(np.abs(J_cs))),
    )
