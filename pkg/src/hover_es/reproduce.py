"""Reproduction driver: regenerates the reference tables and checks each criterion.

Everything here is deterministic: fixed seeds, fixed iteration order, no
timestamps, so repeated runs give byte-identical summaries.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import __version__
from .esc import EscConfig, Objective
from .sim import (STEPS_PER_PERIOD, integrate, run_hover, run_open_loop, simulate_closed_loop)
from .species import (BUNDLED_SPECIES, Species, chord_roundtrip, derivation_report,
                      load_species)
from .stability import (NoEquilibriumFound, Verdict, analyze, companion_roots,
                        cubic_roots, lie_bracket, match_roots)

OBJECTIVES = (Objective.ALTITUDE, Objective.LIFT_BALANCE)

# published ES flapping amplitudes, rad
REFERENCE_AMPLITUDE = {
    "hawkmoth": 1.07, "cranefly": 1.03, "bumblebee": 0.98,
    "dragonfly": 0.91, "hoverfly": 0.75, "hummingbird": 1.19,
}
# published averaged-system eigenvalues, by objective
REFERENCE_EIGENVALUES = {
    "altitude": {
        "hawkmoth": (-9.98, -5.54e05, -1.95e04),
        "cranefly": (-7.34, -8.91e04, -1.44e06),
        "bumblebee": (-1.55, -1.05e05, -1.23e07),
        "dragonfly": (-1.69, -1.38e05, -3.99e06),
        "hoverfly": (-1.05, -1.21e05, -7.80e06),
        "hummingbird": (-2.36, -1.73e05, -2.90e06),
    },
    "lift_balance": {
        "hawkmoth": (-143.25, -1.86e04, -5.25e05),
        "cranefly": (-1.18e03, -1.04e05, -3.24e06),
        "bumblebee": (-1.82e03, -1.69e05, -9.78e06),
        "dragonfly": (-1.55e03, -9.17e04, -2.12e07),
        "hoverfly": (-3.87e03, -1.20e05, -1.55e07),
        "hummingbird": (-1.60e03, -2.49e04, -4.16e06),
    },
}

SETTLE_W = 0.01
SETTLE_Z = 0.01
LIFT_BAND = (0.95, 1.05)
RUN_BUDGET_S = 10.0
AMPLITUDE_TOL = 0.10
EIG_RATIO_BAND = (0.1, 10.0)
SMOOTHING_RMS_TOL = 0.05
SMOOTHING_WINDOW_S = 0.1
IDENTITY_BOUND = 0.15
ROUNDTRIP_TOL = 1e-6
BRACKET_TOL = 1e-6
CUBIC_TOL = 1e-9
N_RANDOM_MATRICES = 1000


@dataclass
class CriterionResult:
    number: int
    name: str
    passed: bool
    detail: dict = field(default_factory=dict)

    def line(self) -> str:
        return f"[{'PASS' if self.passed else 'FAIL'}] criterion {self.number}: {self.name}"


def _f(v) -> Optional[float]:
    """JSON-safe float rounded to 12 significant digits."""
    if v is None:
        return None
    v = float(v)
    return float(f"{v:.12g}") if math.isfinite(v) else None


# ---------------------------------------------------------------- individual criteria

def hover_runs(species: dict, w0s=(0.2, -0.2), duration_periods: Optional[float] = None) -> list[dict]:
    import time

    rows = []
    for name, sp in species.items():
        for obj in OBJECTIVES:
            cfg = EscConfig.for_species(sp, obj)
            for w0 in w0s:
                start = time.perf_counter()
                _, m = run_hover(sp, cfg, w0, duration_periods=duration_periods)
                elapsed = time.perf_counter() - start
                lift_ok = LIFT_BAND[0] <= m.mean_lift_ratio <= LIFT_BAND[1]
                rows.append({
                    "species": name, "objective": obj.value, "w0": w0,
                    "metrics": {k: (_f(v) if isinstance(v, float) else v)
                                for k, v in m.to_dict().items()},
                    "lift_in_band": bool(lift_ok),
                    "within_budget": elapsed < RUN_BUDGET_S,
                    "ok": bool(m.settled and lift_ok and elapsed < RUN_BUDGET_S),
                })
    return rows


def criterion_hover(rows: list[dict]) -> CriterionResult:
    failing = [f"{r['species']}/{r['objective']}/w0={r['w0']:+g}" for r in rows if not r["ok"]]
    return CriterionResult(1, "closed-loop hover settles for every species, objective and disturbance",
                           not failing and bool(rows),
                           {"passed": len(rows) - len(failing), "total": len(rows), "failing": failing})


def criterion_open_loop(sp: Species) -> CriterionResult:
    cfg = EscConfig.for_species(sp, Objective.ALTITUDE)
    open_traj, open_m = run_open_loop(sp, cfg, w0=-1.0)
    _, closed_m = run_hover(sp, cfg, w0=-1.0)
    ramp_r2 = math.nan
    if open_traj is not None:
        tail = open_traj.tail(20)
        t, z = tail.t, tail.column("z")
        fit = np.polyval(np.polyfit(t - t.mean(), z, 1), t - t.mean())
        ramp_r2 = 1.0 - float(np.sum((z - fit) ** 2) / np.sum((z - z.mean()) ** 2))
    open_ok = (not open_m.diverged and abs(open_m.mean_w_tail) > 0.05
               and abs(open_m.z_drift_rate) > 0.05 and ramp_r2 > 0.99)
    closed_ok = closed_m.settled and LIFT_BAND[0] <= closed_m.mean_lift_ratio <= LIFT_BAND[1]
    return CriterionResult(2, "open-loop drift versus closed-loop settling (hawkmoth, w0 = -1)",
                           bool(open_ok and closed_ok), {
                               "open_loop": {"mean_w_tail": _f(open_m.mean_w_tail),
                                             "z_drift_rate": _f(open_m.z_drift_rate),
                                             "z_ramp_r2": _f(ramp_r2), "ok": bool(open_ok)},
                               "closed_loop": {"settled": closed_m.settled, "diverged": closed_m.diverged,
                                               "t_diverged": _f(closed_m.t_diverged),
                                               "mean_w_tail": _f(closed_m.mean_w_tail),
                                               "ok": bool(closed_ok)}})


def amplitude_table(rows: list[dict]) -> list[dict]:
    table = []
    for name, ref in REFERENCE_AMPLITUDE.items():
        runs = [r for r in rows if r["species"] == name and r["objective"] == "altitude" and r["w0"] > 0]
        amp = runs[0]["metrics"]["phi_amplitude"] if runs else None
        err = None if amp is None else amp / ref - 1.0
        table.append({"species": name, "reference": ref, "measured": _f(amp),
                      "rel_err": _f(err), "ok": err is not None and abs(err) <= AMPLITUDE_TOL})
    return table


def criterion_amplitude(table: list[dict]) -> CriterionResult:
    failing = [r["species"] for r in table if not r["ok"]]
    return CriterionResult(3, "flapping amplitudes within 10% of the published ES values",
                           not failing, {"failing": failing})


def eigen_ratios(eigs, ref) -> list[Optional[float]]:
    ours = sorted((abs(z) for z in eigs))
    theirs = sorted(abs(v) for v in ref)
    return [o / t for o, t in zip(ours, theirs)]


def stability_table(species: dict, n_smooth: int = 50) -> list[dict]:
    table = []
    for name, sp in species.items():
        for obj in OBJECTIVES:
            cfg = EscConfig.for_species(sp, obj, n_smooth=n_smooth)
            ref = REFERENCE_EIGENVALUES[obj.value].get(name)
            try:
                rep = analyze(sp, cfg)
            except NoEquilibriumFound as exc:
                table.append({"species": name, "objective": obj.value, "error": str(exc), "ok": False})
                continue
            ratios = eigen_ratios(rep.eigenvalues, ref) if ref else []
            in_band = all(EIG_RATIO_BAND[0] <= r <= EIG_RATIO_BAND[1] for r in ratios)
            table.append({
                "species": name, "objective": obj.value,
                "equilibrium": [_f(v) for v in rep.equilibrium],
                "residual_norm": _f(rep.residual_norm),
                "eigenvalues": [{"re": _f(z.real), "im": _f(z.imag)} for z in rep.eigenvalues],
                "reference": list(ref) if ref else None,
                "magnitude_ratios": [_f(r) for r in ratios],
                "verdict": rep.verdict.value,
                "ok": rep.verdict is Verdict.STABLE and in_band,
            })
    return table


def criterion_stability(table: list[dict]) -> CriterionResult:
    failing = [f"{r['species']}/{r['objective']}" for r in table if not r["ok"]]
    return CriterionResult(4, "averaged system stable with eigenvalue magnitudes within 10x of published",
                           not failing, {"failing": failing})


def smoothing_fidelity(sp: Species, n_smooth: int = 50) -> dict:
    cfg = EscConfig.for_species(sp, Objective.ALTITUDE, n_smooth=n_smooth)
    dt = cfg.period / STEPS_PER_PERIOD
    n = int(math.ceil(SMOOTHING_WINDOW_S / dt))
    exact = simulate_closed_loop(sp.coefficients, cfg, (0.0, 0.0, 0.0, 0.0, 0.0), n, dt)
    smooth = simulate_closed_loop(sp.coefficients, cfg, (0.0, 0.0, 0.0, 0.0, 0.0), n, dt, smoothed=True)
    out = {}
    for col in ("w", "phidot"):
        a, b = exact.column(col), smooth.column(col)
        out[col] = float(np.sqrt(np.mean((a - b) ** 2)) / np.sqrt(np.mean(a ** 2)))
    return out


def criterion_smoothing(sp: Species) -> CriterionResult:
    rms = smoothing_fidelity(sp)
    return CriterionResult(5, "smoothed and exact trajectories agree within 5% RMS over 0.1 s",
                           all(v < SMOOTHING_RMS_TOL for v in rms.values()),
                           {k: _f(v) for k, v in rms.items()})


def criterion_identities(species: dict) -> CriterionResult:
    rows = []
    ok = True
    for name, sp in species.items():
        rt = chord_roundtrip(sp.morphology)
        rep = derivation_report(sp)
        worst_rt = max(abs(rt[k]) for k in ("area_rel_err", "r1_rel_err", "r2_rel_err"))
        row_ok = (worst_rt < ROUNDTRIP_TOL and abs(rep["derived_identity_residual"]) < 1e-12
                  and abs(rep["table_identity_residual"]) <= IDENTITY_BOUND)
        ok = ok and row_ok
        rows.append({"species": name, "roundtrip_max_rel_err": _f(worst_rt),
                     "derived_identity_residual": _f(rep["derived_identity_residual"]),
                     "table_identity_residual": _f(rep["table_identity_residual"]), "ok": row_ok})
    return CriterionResult(6, "chord round trip, derived-coefficient identity, table identity within 15%",
                           ok, {"species": rows})


def rk4_order() -> dict:
    g, c, t_end = 9.81, 0.5, 1.0
    vt = math.sqrt(g / c)
    exact = vt * math.tanh(math.sqrt(g * c) * t_end)
    errs = []
    for steps in (20, 40, 80):
        traj = integrate(lambda t, x: np.array([g - c * x[0] * x[0]]), [0.0], t_end, t_end / steps)
        errs.append(abs(traj.samples[-1, 0] - exact))
    orders = [math.log2(errs[i] / errs[i + 1]) for i in range(2)]
    return {"errors": errs, "orders": orders}


def bracket_oracle(rng: np.random.Generator, trials: int = 20) -> float:
    worst = 0.0
    for _ in range(trials):
        A, B = rng.standard_normal((2, 3, 3))
        x = rng.standard_normal(3)
        got = lie_bracket(lambda y: A @ y, lambda y: B @ y, x)
        want = (B @ A - A @ B) @ x
        worst = max(worst, float(np.linalg.norm(got - want) / np.linalg.norm(want)))
    return worst


def cubic_oracle(rng: np.random.Generator, count: int = N_RANDOM_MATRICES) -> float:
    from .stability import characteristic_coefficients

    worst = 0.0
    for _ in range(count):
        coeffs = characteristic_coefficients(rng.standard_normal((3, 3)))
        worst = max(worst, match_roots(cubic_roots(*coeffs), companion_roots(*coeffs)))
    return worst


def criterion_oracles(seed: int = 20240611) -> CriterionResult:
    rng = np.random.default_rng(seed)
    rk = rk4_order()
    br = bracket_oracle(rng)
    cu = cubic_oracle(rng)
    rk_ok = all(3.8 <= o <= 4.2 for o in rk["orders"])
    return CriterionResult(7, "RK4 order 4, bracket vs commutator, cubic vs companion roots",
                           bool(rk_ok and br < BRACKET_TOL and cu < CUBIC_TOL),
                           {"rk4_orders": [_f(o) for o in rk["orders"]], "bracket_max_rel_err": _f(br),
                            "cubic_max_rel_err": _f(cu)})


# ---------------------------------------------------------------- driver

def run(duration_periods: Optional[float] = None, species_names=BUNDLED_SPECIES) -> dict:
    """Build the full summary dictionary."""
    species = {name: load_species(name) for name in species_names}
    rows = hover_runs(species, duration_periods=duration_periods)
    amps = amplitude_table(rows)
    stab = stability_table(species)
    criteria = [criterion_hover(rows)]
    if "hawkmoth" in species:
        criteria.append(criterion_open_loop(species["hawkmoth"]))
    criteria += [criterion_amplitude(amps), criterion_stability(stab)]
    if "hawkmoth" in species:
        criteria.append(criterion_smoothing(species["hawkmoth"]))
    criteria += [criterion_identities(species), criterion_oracles()]
    identity = [{"species": n, **{k: _f(v) if isinstance(v, float) else v
                                  for k, v in derivation_report(sp).items() if k != "coefficients"}}
                for n, sp in species.items()]
    return {
        "metadata": {
            "tool": "hover-es", "version": __version__,
            "species_checksums": {n: sp.checksum for n, sp in species.items()},
            "config": {"duration_periods": duration_periods, "steps_per_period": STEPS_PER_PERIOD,
                       "window_periods": 20, "w_tol": SETTLE_W, "z_tol": SETTLE_Z},
            "note": "duration, step size and settling thresholds are choices of this tool",
        },
        "coefficient_identity": identity,
        "hover_runs": rows,
        "amplitudes": amps,
        "stability": stab,
        "criteria": [{"number": c.number, "name": c.name, "passed": c.passed, "detail": c.detail}
                     for c in criteria],
        "all_passed": all(c.passed for c in criteria),
    }


def summary_json(summary: dict) -> str:
    return json.dumps(summary, indent=2, sort_keys=True) + "\n"


def summary_text(summary: dict) -> str:
    lines = ["Hover runs"]
    for r in summary["hover_runs"]:
        m = r["metrics"]
        lines.append(f"  {r['species']:<12}{r['objective']:<14}w0={r['w0']:+.1f}  "
                     f"settled={str(m['settled']):<5}  w={_fmt(m['mean_w_tail'])}  "
                     f"L/mg={_fmt(m['mean_lift_ratio'])}  amp={_fmt(m['phi_amplitude'])}")
    lines.append("Flapping amplitude (rad)")
    for r in summary["amplitudes"]:
        lines.append(f"  {r['species']:<12}ref={r['reference']:.2f}  measured={_fmt(r['measured'])}  "
                     f"err={_fmt(r['rel_err'])}")
    lines.append("Averaged-system eigenvalues")
    for r in summary["stability"]:
        if "error" in r:
            lines.append(f"  {r['species']:<12}{r['objective']:<14}{r['error']}")
            continue
        eig = ", ".join(_fmt(e["re"]) for e in r["eigenvalues"])
        lines.append(f"  {r['species']:<12}{r['objective']:<14}{r['verdict']:<9}[{eig}]")
    lines.append("Criteria")
    for c in summary["criteria"]:
        lines.append(f"  [{'PASS' if c['passed'] else 'FAIL'}] {c['number']}: {c['name']}")
    return "\n".join(lines) + "\n"


def _fmt(v) -> str:
    return "n/a" if v is None else f"{v:.4g}"
