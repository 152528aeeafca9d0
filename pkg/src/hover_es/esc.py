"""Extremum-seeking loop around the flapping plant.

The flapping torque is tau = tau_hat + a*Omega*cos(Omega t). The objective J is
demodulated by the same cosine and integrated into tau_hat; there are no
high- or low-pass filters anywhere in the loop.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from enum import Enum
from typing import NamedTuple, Optional

import numpy as np

from .dynamics import DEFAULT_N_SMOOTH, PlantState, abs_smooth
from .species import ModelCoefficients, Species


class Objective(str, Enum):
    ALTITUDE = "altitude"           # J = z^2
    LIFT_BALANCE = "lift_balance"   # J = (L/(m g) - 1)^2

    @property
    def code(self) -> int:
        return 0 if self is Objective.ALTITUDE else 1


class LiftModel(str, Enum):
    WING_ONLY = "wing_only"
    BODY_PLUS_WING = "body_plus_wing"

    @property
    def code(self) -> int:
        return 0 if self is LiftModel.WING_ONLY else 1


class TauhatLaw(str, Enum):
    """How the demodulated objective feeds the torque estimate.

    ``TORQUE``: d(tau_hat)/dt = K J a Omega cos(Omega t); tau_hat is a torque and
    enters the plant as tau_hat / I_F.
    ``INERTIA_SCALED``: the same rate divided once more by I_F.
    """

    TORQUE = "torque"
    INERTIA_SCALED = "inertia_scaled"


@dataclass(frozen=True)
class EscConfig:
    a: float
    K: float
    Omega: float
    objective: Objective = Objective.ALTITUDE
    lift_model: LiftModel = LiftModel.WING_ONLY
    n_smooth: int = DEFAULT_N_SMOOTH
    tauhat_law: TauhatLaw = TauhatLaw.TORQUE

    def __post_init__(self):
        object.__setattr__(self, "objective", Objective(self.objective))
        object.__setattr__(self, "lift_model", LiftModel(self.lift_model))
        object.__setattr__(self, "tauhat_law", TauhatLaw(self.tauhat_law))
        for name in ("a", "K", "Omega"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"{name} must be finite")
        if self.a < 0:
            raise ValueError(f"modulation amplitude must be >= 0, got {self.a}")
        if self.Omega <= 0:
            raise ValueError(f"Omega must be > 0, got {self.Omega}")
        if int(self.n_smooth) != self.n_smooth or self.n_smooth < 1:
            raise ValueError(f"n_smooth must be an integer >= 1, got {self.n_smooth}")

    @classmethod
    def for_species(cls, species: Species, objective=Objective.ALTITUDE, **overrides) -> "EscConfig":
        """Build a config from a species' stored gains for ``objective``."""
        objective = Objective(objective)
        try:
            pair = species.esc[objective.value]
        except KeyError:
            raise KeyError(f"species {species.name!r} has no ES gains for {objective.value!r}") from None
        base = cls(a=pair.a, K=pair.K, Omega=species.morphology.omega, objective=objective)
        return replace(base, **overrides) if overrides else base

    @property
    def period(self) -> float:
        return 2.0 * math.pi / self.Omega

    def tauhat_gain(self, coeffs: ModelCoefficients) -> float:
        """Factor multiplying K J a Omega cos(Omega t) in the tau_hat rate."""
        return 1.0 if self.tauhat_law is TauhatLaw.TORQUE else 1.0 / coeffs.I_F

    def to_dict(self) -> dict:
        return {"a": self.a, "K": self.K, "Omega": self.Omega, "objective": self.objective.value,
                "lift_model": self.lift_model.value, "n_smooth": int(self.n_smooth),
                "tauhat_law": self.tauhat_law.value}


class EsState(NamedTuple):
    z: float
    phi: float
    w: float
    phidot: float
    tau_hat: float

    @property
    def plant(self) -> PlantState:
        return PlantState(self.z, self.phi, self.w, self.phidot)


def _abs(v: float, cfg: EscConfig, smoothed: bool) -> float:
    return abs_smooth(v, cfg.n_smooth) if smoothed else abs(v)


def lift_value(x, cfg: EscConfig, coeffs: ModelCoefficients, smoothed: bool = False) -> float:
    """Lift force in newtons under the configured lift model."""
    phidot = x[3]
    lift_acc = coeffs.k_L * phidot * phidot
    if cfg.lift_model is LiftModel.BODY_PLUS_WING:
        lift_acc = coeffs.k_d1 * _abs(phidot, cfg, smoothed) * x[2] + lift_acc
    return coeffs.m_SI * lift_acc


def objective_value(x, cfg: EscConfig, coeffs: ModelCoefficients, smoothed: bool = False) -> float:
    if cfg.objective is Objective.ALTITUDE:
        return x[0] * x[0]
    dev = lift_value(x, cfg, coeffs, smoothed) / (coeffs.m_SI * coeffs.g) - 1.0
    return dev * dev


def modulation(t: float, cfg: EscConfig) -> float:
    return cfg.a * cfg.Omega * math.cos(cfg.Omega * t)


def affine_decomposition(x, cfg: EscConfig, coeffs: ModelCoefficients,
                         smoothed: bool = False) -> tuple[np.ndarray, np.ndarray]:
    """Split the closed loop as drift Z(x) plus G(x) times the modulation torque."""
    z, phi, w, phidot, tau_hat = x
    c = coeffs
    ap = _abs(phidot, cfg, smoothed)
    drift = np.array([
        w,
        phidot,
        c.g - c.k_d1 * ap * w - c.k_L * phidot * phidot,
        -c.k_d2 * ap * phidot - c.k_d3 * w * phidot + tau_hat / c.I_F,
        0.0,
    ])
    J = objective_value(x, cfg, coeffs, smoothed)
    direction = np.array([0.0, 0.0, 0.0, 1.0 / c.I_F, J * cfg.K * cfg.tauhat_gain(c)])
    return drift, direction


def closed_loop_rhs(t: float, x, cfg: EscConfig, coeffs: ModelCoefficients,
                    smoothed: bool = False) -> np.ndarray:
    """Time derivative of (z, phi, w, phidot, tau_hat)."""
    drift, direction = affine_decomposition(x, cfg, coeffs, smoothed)
    return drift + direction * modulation(t, cfg)


def initial_state(w0: float = 0.0, z0: float = 0.0, tau_hat0: float = 0.0) -> EsState:
    return EsState(z0, 0.0, w0, 0.0, tau_hat0)


def resolve(species: Species, objective, cfg: Optional[EscConfig] = None, **overrides) -> EscConfig:
    """Return ``cfg`` if given, otherwise the species defaults with overrides applied."""
    if cfg is not None:
        return replace(cfg, **overrides) if overrides else cfg
    return EscConfig.for_species(species, objective, **overrides)
