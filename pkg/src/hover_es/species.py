"""Species morphology, chord distribution and plant-coefficient derivation.

Species files are JSON documents in the units the morphology tables use
(mm, mg, Hz, degrees); every field name carries its unit tag. Everything is
converted to SI on load and all computation below is SI.
"""

from __future__ import annotations

import hashlib
import json
import math
import os
from functools import lru_cache
from dataclasses import asdict, dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any, Optional

G_DEFAULT = 9.81
RHO_DEFAULT = 1.225
A0_DEFAULT = 2.0 * math.pi

BUNDLED_SPECIES = ("hawkmoth", "cranefly", "bumblebee", "dragonfly", "hoverfly", "hummingbird")

# key -> (attribute, factor to SI); the key prefix before the unit tag is the
# "base" used to detect unit-tag mismatches.
_MORPH_KEYS = {
    "f_hz": ("f", 1.0),
    "phi_deg": ("Phi", math.pi / 180.0),
    "S_mm2": ("S", 1e-6),
    "R_mm": ("R", 1e-3),
    "cbar_mm": ("c_bar", 1e-3),
    "r1_hat": ("r1_hat", 1.0),
    "r2_hat": ("r2_hat", 1.0),
    "m_mg": ("m", 1e-6),
    "Iy_mg_cm2": ("I_y_body", 1e-6 * 1e-4),
}
_AUX_KEYS = {
    "alpha_m_deg": ("alpha_m", math.pi / 180.0),
    "mw_mg": ("m_w", 1e-6),
    "d_hat": ("d_hat", 1.0),
    "a0_per_rad": ("a0", 1.0),
    "rho_kg_m3": ("rho", 1.0),
}
_AUX_OPTIONAL = {"a0_per_rad": A0_DEFAULT, "rho_kg_m3": RHO_DEFAULT}
_COEFF_KEYS = {
    "kd1": "k_d1",
    "kL": "k_L",
    "kd2": "k_d2",
    "kd3": "k_d3",
    "IF_kg_m2": "I_F",
}
_ESC_OBJECTIVES = ("altitude", "lift_balance")
_TOP_KEYS = {"name", "morphology", "auxiliary", "coefficients_override", "esc", "g_m_s2"}


class SpeciesError(ValueError):
    """Invalid species document or morphology; ``path`` names the offending field."""

    def __init__(self, message: str, path: str = ""):
        self.path = path
        super().__init__(f"{path}: {message}" if path else message)


class SchemaError(SpeciesError):
    pass


class InvariantError(SpeciesError):
    pass


class UnitTagError(SpeciesError):
    pass


class IntegrationError(ArithmeticError):
    pass


@dataclass(frozen=True)
class SpeciesMorphology:
    """Measured wing/body parameters of one species, in SI units."""

    name: str
    f: float  # Hz
    Phi: float  # rad
    S: float  # m^2, one wing
    R: float  # m
    c_bar: float  # m
    r1_hat: float
    r2_hat: float
    m: float  # kg
    I_y_body: float  # kg m^2
    alpha_m: float  # rad
    m_w: float  # kg, one wing
    d_hat: float
    a0: float = A0_DEFAULT
    rho: float = RHO_DEFAULT

    def __post_init__(self):
        validate_morphology(self)

    @property
    def aspect_ratio(self) -> float:
        return self.R**2 / self.S

    @property
    def omega(self) -> float:
        return 2.0 * math.pi * self.f


@dataclass(frozen=True)
class ModelCoefficients:
    """Lumped constants of the 2-DOF plant (SI)."""

    k_d1: float
    k_L: float
    k_d2: float
    k_d3: float
    I_F: float
    m_SI: float
    g: float = G_DEFAULT

    def identity_ratio(self) -> float:
        """k_d3*I_F / (2*m*k_L); equals 1 for coefficients derived from one morphology."""
        return self.k_d3 * self.I_F / (2.0 * self.m_SI * self.k_L)


@dataclass(frozen=True)
class EscPair:
    a: float
    K: float


@dataclass(frozen=True)
class Species:
    """A loaded species record: morphology, coefficients in use and ES gains."""

    morphology: SpeciesMorphology
    coefficients: ModelCoefficients
    esc: dict = field(default_factory=dict)  # objective key -> EscPair
    overridden: bool = False
    checksum: str = ""

    @property
    def name(self) -> str:
        return self.morphology.name


def validate_morphology(morph: SpeciesMorphology) -> None:
    positive = ("f", "Phi", "S", "R", "c_bar", "r1_hat", "r2_hat", "m", "I_y_body",
                "alpha_m", "m_w", "d_hat", "a0", "rho")
    for attr in positive:
        v = getattr(morph, attr)
        if not (isinstance(v, (int, float)) and math.isfinite(v) and v > 0):
            raise InvariantError(f"must be a finite positive number, got {v!r}", attr)
    if not morph.r1_hat < morph.r2_hat < 1.0:
        raise InvariantError(
            f"require 0 < r1_hat < r2_hat < 1, got r1_hat={morph.r1_hat}, r2_hat={morph.r2_hat}",
            "r1_hat")
    if morph.alpha_m >= math.pi / 2:
        raise InvariantError("mean angle of attack must be below 90 degrees", "alpha_m")
    if _shape_factor(morph.r1_hat, morph.r2_hat) <= 1.0:
        raise InvariantError("chord moments give non-positive Beta exponents", "r2_hat")


def _shape_factor(r1: float, r2: float) -> float:
    return r1 * (1.0 - r1) / (r2 * r2 - r1 * r1)


def beta_exponents(morph: SpeciesMorphology) -> tuple[float, float]:
    """(kappa, gamma) of the Beta-shaped chord distribution."""
    q = _shape_factor(morph.r1_hat, morph.r2_hat) - 1.0
    kappa = morph.r1_hat * q
    gamma = (1.0 - morph.r1_hat) * q
    if kappa <= 0 or gamma <= 0:
        raise InvariantError(f"kappa={kappa}, gamma={gamma} must be positive", "r2_hat")
    return kappa, gamma


# -- quadrature -------------------------------------------------------------

def _simpson(f, n: int) -> float:
    h = 1.0 / n
    s = f(0.0) + f(1.0)
    s += 4.0 * math.fsum(f((2 * i - 1) * h) for i in range(1, n // 2 + 1))
    s += 2.0 * math.fsum(f(2 * i * h) for i in range(1, n // 2))
    return s * h / 3.0


def _graded_half(e_near: float, e_far: float, rtol: float, max_panels: int) -> float:
    """Integral over [0, 1/2] of x**e_near * (1-x)**e_far.

    The substitution x = v**p / 2 makes the integrand vanish like v**4 (or
    faster) at the origin so composite Simpson converges at full order.
    """
    if e_near <= -1.0:
        raise IntegrationError(
            f"integrand ~ x^{e_near:.4g} at the wing root/tip is not integrable")
    p = max(1.0, 5.0 / (e_near + 1.0))
    q = p * (e_near + 1.0) - 1.0
    scale = 0.5 * p * 0.5**e_near

    def f(v: float) -> float:
        x = 0.5 * v**p
        return scale * v**q * (1.0 - x) ** e_far

    n = 16
    prev = _simpson(f, n)
    while n < max_panels:
        n *= 2
        cur = _simpson(f, n)
        if abs(cur - prev) <= rtol * abs(cur):
            return cur
        prev = cur
    raise IntegrationError(
        f"quadrature did not reach rtol={rtol} with {max_panels} panels "
        f"(exponents {e_near:.4g}, {e_far:.4g}; last change {abs(cur - prev):.3e})")


def beta_integral(e0: float, e1: float, rtol: float = 1e-11, max_panels: int = 1 << 16) -> float:
    """Integral over [0, 1] of x**e0 * (1-x)**e1 by graded composite Simpson."""
    return (_graded_half(e0, e1, rtol, max_panels)
            + _graded_half(e1, e0, rtol, max_panels))


# -- chord distribution -----------------------------------------------------

@lru_cache(maxsize=256)
def chord_params(morph: SpeciesMorphology) -> tuple[float, float, float, float]:
    """(kappa, gamma, beta, chord scale) for the chord distribution.

    The mean chord is taken as S/R so the distribution integrates to the wing
    area exactly.
    """
    kappa, gamma = beta_exponents(morph)
    beta = beta_integral(kappa - 1.0, gamma - 1.0)
    return kappa, gamma, beta, (morph.S / morph.R) / beta


def chord_at(r: float, morph: SpeciesMorphology) -> float:
    """Chord length in m at spanwise station ``r`` (m)."""
    if not 0.0 <= r <= morph.R:
        raise ValueError(f"r={r} outside [0, R={morph.R}]")
    kappa, gamma, _, scale = chord_params(morph)
    x = r / morph.R
    return scale * x ** (kappa - 1.0) * (1.0 - x) ** (gamma - 1.0)


@lru_cache(maxsize=1024)
def chord_moment(m_exp: int, n_exp: int, morph: SpeciesMorphology, rtol: float = 1e-9) -> float:
    """I_mn = 2 * int_0^R r^m c(r)^n dr, in SI."""
    if m_exp < 0 or n_exp < 1:
        raise ValueError("need m_exp >= 0 and n_exp >= 1")
    kappa, gamma, _, scale = chord_params(morph)
    e0 = m_exp + n_exp * (kappa - 1.0)
    e1 = n_exp * (gamma - 1.0)
    try:
        integral = beta_integral(e0, e1, rtol=min(rtol, 1e-11))
    except IntegrationError as exc:
        raise IntegrationError(f"I_{m_exp}{n_exp} for {morph.name}: {exc}") from None
    return 2.0 * morph.R ** (m_exp + 1) * scale**n_exp * integral


def chord_roundtrip(morph: SpeciesMorphology) -> dict:
    """Recover area and radius moments from the chord distribution.

    Returns the recovered values and their relative errors against S, r1_hat
    and r2_hat.
    """
    area = 0.5 * chord_moment(0, 1, morph)
    r1 = 0.5 * chord_moment(1, 1, morph) / (morph.S * morph.R)
    r2 = math.sqrt(0.5 * chord_moment(2, 1, morph) / (morph.S * morph.R**2))
    return {
        "area": area, "r1_hat": r1, "r2_hat": r2,
        "area_rel_err": area / morph.S - 1.0,
        "r1_rel_err": r1 / morph.r1_hat - 1.0,
        "r2_rel_err": r2 / morph.r2_hat - 1.0,
    }


def lift_curve_slope(morph: SpeciesMorphology) -> float:
    """Finite-wing lift-curve slope from aspect ratio and 2-D slope a0."""
    pa = math.pi * morph.aspect_ratio
    return pa / (1.0 + math.sqrt((pa / morph.a0) ** 2 + 1.0))


def flapping_inertia(morph: SpeciesMorphology) -> float:
    m_areal = morph.m_w / (2.0 * morph.S)
    i_x = m_areal * chord_moment(2, 1, morph)
    i_y = m_areal * morph.d_hat**2 * chord_moment(0, 3, morph)
    i_z = i_x + i_y
    s, c = math.sin(morph.alpha_m), math.cos(morph.alpha_m)
    return i_x * s * s + i_z * c * c


def derive_coefficients(morph: SpeciesMorphology, g: float = G_DEFAULT) -> ModelCoefficients:
    def step(symbol, fn, *args):
        try:
            return fn(*args)
        except (IntegrationError, ValueError) as exc:
            raise type(exc)(f"{symbol}: {exc}") from None

    cla = step("C_La", lift_curve_slope, morph)
    i11 = step("I_11", chord_moment, 1, 1, morph)
    i21 = step("I_21", chord_moment, 2, 1, morph)
    i31 = step("I_31", chord_moment, 3, 1, morph)
    i_f = step("I_F", flapping_inertia, morph)
    s, c = math.sin(morph.alpha_m), math.cos(morph.alpha_m)
    base = morph.rho * cla
    shared = base * i21 * s * c
    return ModelCoefficients(
        k_d1=base * i11 * c * c / (2.0 * morph.m),
        k_L=shared / (2.0 * morph.m),
        k_d2=base * i31 * s * s / i_f,
        k_d3=shared / i_f,
        I_F=i_f,
        m_SI=morph.m,
        g=g,
    )


# -- file format ------------------------------------------------------------

def _number(value: Any, path: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise SchemaError(f"expected a number, got {type(value).__name__}", path)
    if not math.isfinite(value):
        raise SchemaError("must be finite", path)
    return float(value)


def _unit_base(key: str) -> str:
    return key.split("_", 1)[0]


def _read_block(block: Any, keys: dict, path: str, optional: dict = None) -> dict:
    optional = optional or {}
    if not isinstance(block, dict):
        raise SchemaError("expected an object", path)
    known_bases = {_unit_base(k): k for k in keys}
    for key in block:
        if key not in keys:
            base = _unit_base(key)
            if base in known_bases:
                raise UnitTagError(f"unit tag mismatch, expected '{known_bases[base]}'",
                                   f"{path}.{key}")
            raise SchemaError("unknown key", f"{path}.{key}")
    out = {}
    for key in keys:
        if key in block:
            out[key] = _number(block[key], f"{path}.{key}")
        elif key in optional:
            out[key] = optional[key]
        else:
            raise SchemaError("missing required key", f"{path}.{key}")
    return out


def parse_species(doc: dict, checksum: str = "") -> Species:
    """Validate a species document and build the record."""
    if not isinstance(doc, dict):
        raise SchemaError("species document must be a JSON object")
    for key in doc:
        if key not in _TOP_KEYS:
            raise SchemaError("unknown key", key)
    for key in ("name", "morphology", "auxiliary"):
        if key not in doc:
            raise SchemaError("missing required key", key)
    name = doc["name"]
    if not isinstance(name, str) or not name:
        raise SchemaError("must be a non-empty string", "name")

    morph_raw = _read_block(doc["morphology"], _MORPH_KEYS, "morphology")
    aux_raw = _read_block(doc["auxiliary"], _AUX_KEYS, "auxiliary", _AUX_OPTIONAL)
    fields = {attr: morph_raw[k] * fac for k, (attr, fac) in _MORPH_KEYS.items()}
    fields.update({attr: aux_raw[k] * fac for k, (attr, fac) in _AUX_KEYS.items()})
    try:
        morph = SpeciesMorphology(name=name, **fields)
    except InvariantError as exc:
        section = "auxiliary" if exc.path in {a for a, _ in _AUX_KEYS.values()} else "morphology"
        raise InvariantError(str(exc).split(": ", 1)[-1], f"{section}.{exc.path}") from None

    g = _number(doc.get("g_m_s2", G_DEFAULT), "g_m_s2")
    if "coefficients_override" in doc:
        raw = _read_block(doc["coefficients_override"], {k: None for k in _COEFF_KEYS},
                          "coefficients_override")
        for key, v in raw.items():
            if v <= 0:
                raise InvariantError("must be positive", f"coefficients_override.{key}")
        coeffs = ModelCoefficients(m_SI=morph.m, g=g,
                                   **{_COEFF_KEYS[k]: v for k, v in raw.items()})
        overridden = True
    else:
        coeffs = derive_coefficients(morph, g=g)
        overridden = False

    esc = {}
    if "esc" in doc:
        block = doc["esc"]
        if not isinstance(block, dict):
            raise SchemaError("expected an object", "esc")
        for key, pair in block.items():
            if key not in _ESC_OBJECTIVES:
                raise SchemaError("unknown objective", f"esc.{key}")
            vals = _read_block(pair, {"a": None, "K": None}, f"esc.{key}")
            if vals["a"] <= 0:
                raise InvariantError("modulation amplitude must be positive", f"esc.{key}.a")
            esc[key] = EscPair(a=vals["a"], K=vals["K"])
    return Species(morphology=morph, coefficients=coeffs, esc=esc,
                   overridden=overridden, checksum=checksum)


def data_dir() -> Path:
    env = os.environ.get("HOVER_ES_DATA")
    if env:
        return Path(env)
    return Path(str(resources.files("hover_es") / "data"))


def list_species(directory: Optional[Path] = None) -> list[str]:
    directory = Path(directory) if directory else data_dir()
    return sorted(p.stem for p in directory.glob("*.json"))


def load_species(source, directory: Optional[Path] = None) -> Species:
    """Load a species by bundled name or from a file path."""
    if isinstance(source, Species):
        return source
    path = Path(source)
    if not path.suffix == ".json" or not path.exists():
        candidate = (Path(directory) if directory else data_dir()) / f"{source}.json"
        if not candidate.exists():
            raise KeyError(f"unknown species {str(source)!r}")
        path = candidate
    raw = path.read_bytes()
    try:
        doc = json.loads(raw.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise SchemaError(f"malformed JSON: {exc}", str(path)) from None
    return parse_species(doc, checksum=hashlib.sha256(raw).hexdigest())


def species_document(species: Species) -> dict:
    """Inverse of :func:`parse_species` (values back in file units)."""
    morph = species.morphology
    doc: dict = {"name": morph.name}
    doc["morphology"] = {k: _clean(getattr(morph, a) / f) for k, (a, f) in _MORPH_KEYS.items()}
    doc["auxiliary"] = {k: _clean(getattr(morph, a) / f) for k, (a, f) in _AUX_KEYS.items()}
    if species.coefficients.g != G_DEFAULT:
        doc["g_m_s2"] = species.coefficients.g
    if species.overridden:
        doc["coefficients_override"] = {
            k: getattr(species.coefficients, a) for k, a in _COEFF_KEYS.items()}
    if species.esc:
        doc["esc"] = {k: {"a": p.a, "K": p.K} for k, p in species.esc.items()}
    return doc


def _clean(v: float) -> float:
    # undo unit-conversion round-off so file -> record -> file is stable
    return float(f"{v:.12g}")


def dump_species(species: Species) -> str:
    return json.dumps(species_document(species), indent=2) + "\n"


def table_identity_report(species: Species) -> dict:
    """How far the coefficients in use are from k_d3 = 2 m k_L / I_F."""
    ratio = species.coefficients.identity_ratio()
    return {"species": species.name, "ratio": ratio, "deviation": ratio - 1.0}


def derivation_report(species: Species) -> dict:
    """Derived coefficients next to the ones in use, with relative deviation."""
    derived = derive_coefficients(species.morphology, g=species.coefficients.g)
    rows = {}
    for key, attr in _COEFF_KEYS.items():
        used = getattr(species.coefficients, attr)
        got = getattr(derived, attr)
        rows[key] = {"derived": got, "in_use": used, "rel_dev": got / used - 1.0}
    return {
        "species": species.name,
        "coefficients": rows,
        "derived_identity_residual": derived.identity_ratio() - 1.0,
        "table_identity_residual": species.coefficients.identity_ratio() - 1.0,
    }


def morphology_dict(morph: SpeciesMorphology) -> dict:
    return asdict(morph)
