"""Command-line interface: ``hover-es <species|simulate|stability|sweep|reproduce>``.

Exit codes: 0 success, 1 acceptance failure, 2 configuration error,
3 divergence, 4 analysis failure.
"""

from __future__ import annotations

import argparse
import csv
import io
import itertools
import json
import math
import sys
from dataclasses import replace
from pathlib import Path
from typing import Optional

from . import __version__
from . import reproduce as repro
from .esc import EscConfig, LiftModel, Objective, TauhatLaw
from .sim import STEPS_PER_PERIOD, run_hover, run_open_loop, sweep
from .species import (BUNDLED_SPECIES, SpeciesError, derivation_report, list_species,
                      load_species, species_document)
from .stability import APlacement, NoEquilibriumFound, Verdict, analyze

EXIT_OK, EXIT_ACCEPTANCE, EXIT_CONFIG, EXIT_DIVERGENCE, EXIT_ANALYSIS = 0, 1, 2, 3, 4

# run-config keys accepted from a JSON file; flags with the same meaning override them
CONFIG_KEYS = ("species", "objective", "a", "K", "Omega", "w0", "duration", "duration_periods", "dt",
               "n_smooth", "tauhat_law", "lift_model", "a_placement", "open_loop", "smoothed",
               "stride", "output", "format")
DEFAULTS = {"objective": "altitude", "w0": 0.2, "tauhat_law": "torque", "lift_model": "wing_only",
            "a_placement": "squared", "open_loop": False, "smoothed": False, "stride": 1,
            "output": ".", "format": "csv,json"}


class ConfigError(Exception):
    pass


PLOT_SCRIPT = '''"""Plot a hover-es trajectory CSV: six stacked panels sharing the time axis."""
import csv
import sys

import matplotlib.pyplot as plt

path = sys.argv[1] if len(sys.argv) > 1 else {csv_name!r}
with open(path, encoding="utf-8") as fh:
    rows = list(csv.DictReader(fh))
t = [float(r["t"]) for r in rows]
panels = [("z", "z (m, positive along gravity)"), ("w", "w (m/s)"), ("phidot", "phidot (rad/s)"),
          ("tauhat", "tau_hat (N m)"), ("J", "J"), ("lift_ratio", "L/(m g)")]
fig, axes = plt.subplots(len(panels), 1, sharex=True, figsize=(7, 11))
for ax, (key, label) in zip(axes, panels):
    ax.plot(t, [float(r[key]) for r in rows], lw=0.6)
    ax.set_ylabel(label)
axes[-1].set_xlabel("t (s)")
fig.suptitle({title!r})
fig.tight_layout()
fig.savefig(path.rsplit(".", 1)[0] + ".png", dpi=150)
'''


# ---------------------------------------------------------------- helpers

def _load(ref):
    try:
        return load_species(ref)
    except KeyError as exc:
        raise ConfigError(exc.args[0] if exc.args else str(exc)) from None
    except (SpeciesError, OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot load species {ref!r}: {exc}") from None


def resolve_config(args: argparse.Namespace) -> dict:
    """Merge flags over the run-config file over built-in defaults."""
    resolved = dict(DEFAULTS)
    if getattr(args, "config", None):
        try:
            file_cfg = json.loads(Path(args.config).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read run config {args.config}: {exc}") from None
        unknown = set(file_cfg) - set(CONFIG_KEYS)
        if unknown:
            raise ConfigError(f"unknown run-config key(s): {sorted(unknown)}")
        resolved.update(file_cfg)
    for key in CONFIG_KEYS:
        value = getattr(args, key, None)
        if value is not None and value is not False:
            resolved[key] = value
    for key in ("a", "K", "Omega", "w0", "duration", "duration_periods", "dt"):
        v = resolved.get(key)
        if v is not None and not math.isfinite(float(v)):
            raise ConfigError(f"{key} must be finite")
    for key in ("duration", "duration_periods", "dt"):
        if resolved.get(key) is not None and float(resolved[key]) <= 0:
            raise ConfigError(f"{key} must be positive")
    if int(resolved["stride"]) < 1:
        raise ConfigError("stride must be >= 1")
    try:
        Objective(resolved["objective"])
        TauhatLaw(resolved["tauhat_law"])
        LiftModel(resolved["lift_model"])
        APlacement(resolved["a_placement"])
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    return resolved


def build_esc(species, resolved: dict, objective=None) -> EscConfig:
    cfg = EscConfig.for_species(species, objective or resolved["objective"])
    changes = {k: float(resolved[k]) for k in ("a", "K", "Omega") if resolved.get(k) is not None}
    if resolved.get("n_smooth") is not None:
        changes["n_smooth"] = int(resolved["n_smooth"])
    changes["tauhat_law"] = TauhatLaw(resolved["tauhat_law"])
    changes["lift_model"] = LiftModel(resolved["lift_model"])
    try:
        return replace(cfg, **changes)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def metadata(species_list, resolved: dict, cfg: Optional[EscConfig] = None) -> dict:
    meta = {"tool": "hover-es", "version": __version__,
            "species_checksums": {sp.name: sp.checksum for sp in species_list},
            "config": {k: v for k, v in sorted(resolved.items())}}
    if cfg is not None:
        meta["esc"] = cfg.to_dict()
    meta["defaults_note"] = ("duration, step size and settling thresholds are choices of this tool, "
                             "not measured values")
    return meta


def _write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text, encoding="utf-8")


def _formats(resolved: dict) -> set:
    fmts = {f.strip() for f in str(resolved["format"]).split(",") if f.strip()}
    bad = fmts - {"csv", "json"}
    if bad:
        raise ConfigError(f"unknown format(s): {sorted(bad)}")
    return fmts


# ---------------------------------------------------------------- commands

def cmd_species(args) -> int:
    if args.action == "list":
        for name in list_species():
            print(name)
        return EXIT_OK
    if args.action == "show":
        if not args.target:
            raise ConfigError("species show needs a name")
        sp = _load(args.target[0])
        print(json.dumps(species_document(sp), indent=2))
        c = sp.coefficients
        print(f"coefficients in use: k_d1={c.k_d1:.6g} k_L={c.k_L:.6g} k_d2={c.k_d2:.6g} "
              f"k_d3={c.k_d3:.6g} I_F={c.I_F:.6g}")
        return EXIT_OK
    # derive
    if not args.target:
        raise ConfigError("species derive needs a file or 'bundled <name>'")
    ref = args.target[1] if args.target[0] == "bundled" and len(args.target) > 1 else args.target[0]
    sp = _load(ref)
    rep = derivation_report(sp)
    print(f"{'coefficient':<12}{'derived':>14}{'in use':>14}{'deviation %':>14}")
    for key, row in rep["coefficients"].items():
        print(f"{key:<12}{row['derived']:>14.6g}{row['in_use']:>14.6g}{100 * row['rel_dev']:>14.3f}")
    print(f"k_d3 = 2 m k_L / I_F residual: derived {rep['derived_identity_residual']:+.3e}, "
          f"in use {rep['table_identity_residual']:+.3e}")
    return EXIT_OK


def cmd_simulate(args) -> int:
    resolved = resolve_config(args)
    if not resolved.get("species"):
        raise ConfigError("--species is required")
    sp = _load(resolved["species"])
    cfg = build_esc(sp, resolved)
    out = Path(resolved["output"])
    fmts = _formats(resolved)
    kw = {"w0": float(resolved["w0"]), "smoothed": bool(resolved["smoothed"]),
          "allow_coarse": bool(args.allow_coarse)}
    if resolved.get("duration") is not None:
        kw["duration"] = float(resolved["duration"])
    elif resolved.get("duration_periods") is not None:
        kw["duration_periods"] = float(resolved["duration_periods"])
    if resolved.get("dt") is not None:
        kw["dt"] = float(resolved["dt"])
    runner = run_open_loop if resolved["open_loop"] else run_hover
    try:
        traj, metrics = runner(sp, cfg, **kw)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    if resolved["open_loop"]:
        cfg = replace(cfg, K=0.0)
    stem = f"{sp.name}_{cfg.objective.value}"
    meta = metadata([sp], resolved, cfg)
    if traj is not None and "csv" in fmts:
        csv_path = out / f"{stem}_trajectory.csv"
        _write(csv_path, traj.to_csv(stride=int(resolved["stride"])))
        _write(out / f"{stem}_plot.py",
               PLOT_SCRIPT.format(csv_name=csv_path.name, title=f"{sp.name}, {cfg.objective.value}"))
    if "json" in fmts:
        doc = {"metadata": meta, "metrics": metrics.to_dict()}
        if traj is not None:
            doc["trajectory_checksum"] = traj.checksum()
        _write(out / f"{stem}_metrics.json", json.dumps(doc, indent=2) + "\n")
    m = metrics
    if m.diverged:
        print(f"{stem}: diverged; last finite time {m.t_diverged:.6g} s", file=sys.stderr)
        return EXIT_DIVERGENCE
    print(f"{stem}: settled={m.settled} mean_w={m.mean_w_tail:.4g} m/s z_drift={m.z_drift_rate:.4g} m/s "
          f"lift_ratio={m.mean_lift_ratio:.4f} phi_amplitude={m.phi_amplitude:.4f} rad")
    return EXIT_OK if (m.settled or args.no_assert) else EXIT_ACCEPTANCE


def _stability_pairs(args, resolved):
    names = list(BUNDLED_SPECIES) if args.all or not resolved.get("species") else [resolved["species"]]
    objs = [args.objective] if args.objective else [o.value for o in Objective]
    return [(n, o) for n in names for o in objs]


def _analyze_one(task):
    name, obj, resolved = task
    sp = _load(name)
    cfg = build_esc(sp, resolved, obj)
    try:
        return analyze(sp, cfg, APlacement(resolved["a_placement"])).to_dict(), None
    except NoEquilibriumFound as exc:
        return None, str(exc)


def cmd_stability(args) -> int:
    resolved = resolve_config(args)
    pairs = _stability_pairs(args, resolved)
    tasks = [(n, o, resolved) for n, o in pairs]
    if args.jobs > 1:
        from concurrent.futures import ProcessPoolExecutor
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            results = list(pool.map(_analyze_one, tasks))
    else:
        results = [_analyze_one(t) for t in tasks]
    out = Path(resolved["output"])
    failed, all_stable = [], True
    print(f"{'species':<12}{'objective':<14}{'verdict':<10}eigenvalues")
    for (name, obj), (rep, err) in zip(pairs, results):
        if err is not None:
            failed.append(f"{name}/{obj}: {err}")
            print(f"{name:<12}{obj:<14}{'failed':<10}{err}")
            continue
        sp = _load(name)
        doc = dict(rep)
        doc["metadata"] = metadata([sp], resolved)
        _write(out / f"stability_{name}_{obj}.json", json.dumps(doc, indent=2) + "\n")
        eig = ", ".join(f"{e['re']:.4g}{e['im']:+.3g}j" for e in rep["eigenvalues"])
        print(f"{name:<12}{obj:<14}{rep['verdict']:<10}{eig}")
        all_stable = all_stable and rep["verdict"] == Verdict.STABLE.value
    if failed:
        print("no equilibrium found for: " + "; ".join(failed), file=sys.stderr)
        return EXIT_ANALYSIS
    return EXIT_OK if all_stable else EXIT_ACCEPTANCE


def _parse_value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def _override_grid(vary: list[str], fixed: list[str]) -> list[dict]:
    base = {}
    for item in fixed or []:
        key, _, val = item.partition("=")
        if not _:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        base[key] = _parse_value(val)
    axes = []
    for item in vary or []:
        key, _, vals = item.partition("=")
        if not _ or not vals:
            raise ConfigError(f"--vary expects key=v1,v2,..., got {item!r}")
        axes.append([(key, _parse_value(v)) for v in vals.split(",")])
    grid = []
    for combo in itertools.product(*axes):
        cell = dict(base)
        cell.update(combo)
        grid.append(cell)
    return grid


def cmd_sweep(args) -> int:
    resolved = resolve_config(args)
    names = args.species_list or list(BUNDLED_SPECIES)
    for n in names:
        _load(n)
    objs = args.objectives or [o.value for o in Objective]
    grid = _override_grid(args.vary, args.set)
    try:
        cells = sweep(names, objs, grid, jobs=args.jobs)
    except (KeyError, ValueError) as exc:
        raise ConfigError(str(exc)) from None
    out = Path(resolved["output"])
    fmts = _formats(resolved)
    species_list = [_load(n) for n in names]
    if "json" in fmts:
        doc = {"metadata": metadata(species_list, resolved), "cells": [c.to_dict() for c in cells]}
        _write(out / "sweep.json", json.dumps(doc, indent=2) + "\n")
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["species", "objective", "overrides", "settled", "mean_w_tail", "z_drift_rate",
                     "mean_lift_ratio", "phi_amplitude", "error"])
    for c in cells:
        m = c.metrics
        vals = ([m.settled, repr(m.mean_w_tail), repr(m.z_drift_rate), repr(m.mean_lift_ratio),
                 repr(m.phi_amplitude)] if m else [""] * 5)
        writer.writerow([c.species, c.objective, json.dumps(c.overrides, sort_keys=True), *vals, c.error or ""])
        print(f"{c.species:<12}{c.objective:<14}{json.dumps(c.overrides, sort_keys=True):<30}"
              + (f"settled={m.settled} w={m.mean_w_tail:.3g} L/mg={m.mean_lift_ratio:.3f}" if m else c.error))
    if "csv" in fmts:
        _write(out / "sweep.csv", buf.getvalue())
    return EXIT_OK


def cmd_reproduce(args) -> int:
    summary = repro.run(duration_periods=args.duration_periods)
    out = Path(args.output or ".")
    _write(out / "summary.json", repro.summary_json(summary))
    text = repro.summary_text(summary)
    _write(out / "summary.txt", text)
    print(text, end="")
    failing = [f"{c['number']} ({c['name']})" for c in summary["criteria"] if not c["passed"]]
    if failing:
        print("failing criteria: " + "; ".join(failing), file=sys.stderr)
        return EXIT_ACCEPTANCE
    return EXIT_OK


# ---------------------------------------------------------------- parser

def _run_flags(p: argparse.ArgumentParser, single_objective: bool = True) -> None:
    p.add_argument("--config", help="run-config JSON file (flags take precedence)")
    p.add_argument("--species", help="bundled species name or path to a species file")
    if single_objective:
        p.add_argument("--objective", choices=[o.value for o in Objective])
    p.add_argument("--a", type=float, help="modulation amplitude override")
    p.add_argument("--K", type=float, help="integrator gain override")
    p.add_argument("--omega", dest="Omega", type=float, help="modulation frequency override, rad/s")
    p.add_argument("--n-smooth", dest="n_smooth", type=int)
    p.add_argument("--tauhat-law", dest="tauhat_law", choices=[t.value for t in TauhatLaw])
    p.add_argument("--lift-model", dest="lift_model", choices=[m.value for m in LiftModel])
    p.add_argument("--output", help="output directory")
    p.add_argument("--format", help="comma-separated writers: csv,json")
    p.add_argument("--jobs", type=int, default=1)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hover-es", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"hover-es {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("species", help="list, show or derive species coefficients")
    p.add_argument("action", choices=["list", "show", "derive"])
    p.add_argument("target", nargs="*")
    p.set_defaults(func=cmd_species)

    p = sub.add_parser("simulate", help="closed- or open-loop hover run")
    _run_flags(p)
    p.add_argument("--w0", type=float, help="initial vertical velocity, m/s")
    p.add_argument("--duration", type=float, help="simulated time, s")
    p.add_argument("--duration-periods", dest="duration_periods", type=float)
    p.add_argument("--dt", type=float, help=f"step, s (default period/{STEPS_PER_PERIOD})")
    p.add_argument("--allow-coarse", action="store_true", help="permit dt above period/100")
    p.add_argument("--open-loop", dest="open_loop", action="store_true", help="disable the integrator (K = 0)")
    p.add_argument("--smoothed", action="store_true", help="use the smoothed |phidot|")
    p.add_argument("--stride", type=int, help="write every Nth sample to the CSV")
    p.add_argument("--no-assert", dest="no_assert", action="store_true",
                   help="exit 0 on completion even if not settled")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("stability", help="averaged-system eigenvalue analysis")
    _run_flags(p)
    p.add_argument("--all", action="store_true", help="every bundled species and objective")
    p.add_argument("--a-placement", dest="a_placement", choices=[a.value for a in APlacement])
    p.set_defaults(func=cmd_stability)

    p = sub.add_parser("sweep", help="grid of hover runs")
    _run_flags(p, single_objective=False)
    p.add_argument("--species-list", nargs="+", help="species to include (default: all bundled)")
    p.add_argument("--objectives", nargs="+", choices=[o.value for o in Objective])
    p.add_argument("--vary", action="append", help="key=v1,v2,... grid axis (repeatable)")
    p.add_argument("--set", action="append", help="key=value applied to every cell (repeatable)")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("reproduce", help="regenerate reference tables and check every criterion")
    p.add_argument("--output", help="output directory")
    p.add_argument("--duration-periods", dest="duration_periods", type=float)
    p.set_defaults(func=cmd_reproduce)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
