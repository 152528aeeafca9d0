"""Time integration, hover experiments and hover-condition metrics."""

from __future__ import annotations

import csv
import hashlib
import io
import math
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from typing import Callable, Optional, Sequence

import numpy as np

from . import kernel
from .esc import EscConfig, LiftModel, Objective, TauhatLaw
from .species import ModelCoefficients, Species, load_species

STEPS_PER_PERIOD = 200
DEFAULT_DURATION_PERIODS = 600
WINDOW_PERIODS = 20
W_TOL = 0.01
Z_TOL = 0.01
MIN_STEPS_PER_PERIOD = 100
CSV_HEADER = ("t", "z", "phi", "w", "phidot", "tauhat", "J", "lift_ratio")


class DivergenceError(ArithmeticError):
    """Integration produced a non-finite state.

    ``t`` and ``state`` are the last finite time and state; ``trajectory`` holds
    everything up to that point when available.
    """

    def __init__(self, t: float, state, trajectory: Optional["Trajectory"] = None):
        super().__init__(f"non-finite state after t = {t:.6g} s")
        self.t = t
        self.state = np.asarray(state, dtype=float)
        self.trajectory = trajectory


class InsufficientDataError(ValueError):
    pass


class CoarseStepWarning(UserWarning):
    pass


@dataclass
class Trajectory:
    """States on a uniform grid t_i = t0 + i*dt; columns z, phi, w, phidot, tau_hat."""

    t0: float
    dt: float
    samples: np.ndarray
    period: Optional[float] = None
    cfg: Optional[EscConfig] = None
    coeffs: Optional[ModelCoefficients] = None

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=float)
        if self.samples.ndim != 2 or len(self.samples) < 2:
            raise ValueError("a trajectory needs at least two samples")

    def __len__(self):
        return len(self.samples)

    @property
    def t(self) -> np.ndarray:
        return self.t0 + np.arange(len(self.samples)) * self.dt

    @property
    def t_end(self) -> float:
        return self.t0 + (len(self.samples) - 1) * self.dt

    def column(self, name: str) -> np.ndarray:
        return self.samples[:, ("z", "phi", "w", "phidot", "tau_hat").index(name)]

    def objective(self) -> np.ndarray:
        """J along the trajectory (exact absolute value)."""
        cfg, c = self._need_model()
        with np.errstate(over="ignore", invalid="ignore"):
            if cfg.objective is Objective.ALTITUDE:
                z = self.samples[:, 0]
                return z * z
            dev = self.lift_ratio() - 1.0
            return dev * dev

    def lift_ratio(self) -> np.ndarray:
        """L/(m g) along the trajectory."""
        cfg, c = self._need_model()
        w, pd = self.samples[:, 2], self.samples[:, 3]
        with np.errstate(over="ignore", invalid="ignore"):  # diverged prefixes hold huge values
            acc = c.k_L * pd * pd
            if cfg.lift_model is LiftModel.BODY_PLUS_WING:
                acc = c.k_d1 * np.abs(pd) * w + acc
            return acc / c.g

    def _need_model(self):
        if self.cfg is None or self.coeffs is None:
            raise ValueError("derived channels need the trajectory's config and coefficients")
        return self.cfg, self.coeffs

    def tail(self, periods: float) -> "Trajectory":
        """The trailing ``periods`` flapping periods (whole trajectory if shorter)."""
        if self.period is None:
            raise ValueError("trajectory has no flapping period")
        n = int(round(periods * self.period / self.dt)) + 1
        start = max(0, len(self.samples) - n)
        return replace(self, t0=self.t0 + start * self.dt, samples=self.samples[start:])

    def checksum(self) -> str:
        h = hashlib.sha256()
        h.update(np.float64([self.t0, self.dt]).tobytes())
        h.update(np.ascontiguousarray(self.samples).tobytes())
        return h.hexdigest()

    def to_csv(self, stream=None, stride: int = 1) -> str:
        """Write ``t,z,phi,w,phidot,tauhat,J,lift_ratio`` rows; returns the text if no stream."""
        if stride < 1:
            raise ValueError("stride must be >= 1")
        cols = [self.t, *self.samples.T]
        if self.cfg is not None and self.coeffs is not None:
            cols += [self.objective(), self.lift_ratio()]
        else:
            cols += [np.full(len(self), np.nan)] * 2
        data = np.column_stack(cols)[::stride]
        out = stream if stream is not None else io.StringIO()
        writer = csv.writer(out, lineterminator="\n")
        writer.writerow(CSV_HEADER)
        for row in data:
            writer.writerow([repr(float(v)) for v in row])
        return out.getvalue() if stream is None else ""


@dataclass
class HoverMetrics:
    mean_w_tail: float
    z_drift_rate: float
    mean_lift_ratio: float
    phi_amplitude: float
    settled: bool
    tauhat_tail_mean: float = math.nan
    tauhat_drift_rate: float = math.nan
    window_periods: float = WINDOW_PERIODS
    diverged: bool = False
    t_diverged: Optional[float] = None

    def to_dict(self) -> dict:
        return {k: (None if isinstance(v, float) and not math.isfinite(v) else v)
                for k, v in asdict(self).items()}

    @property
    def lift_balanced(self) -> bool:
        return 0.95 <= self.mean_lift_ratio <= 1.05


def _check_step(dt: float, period: Optional[float], allow_coarse: bool) -> None:
    if dt <= 0 or not math.isfinite(dt):
        raise ValueError(f"dt must be positive, got {dt}")
    if period is not None and dt > period / MIN_STEPS_PER_PERIOD * (1 + 1e-12):
        msg = f"dt = {dt:.3g} s exceeds period/{MIN_STEPS_PER_PERIOD} = {period / MIN_STEPS_PER_PERIOD:.3g} s"
        if not allow_coarse:
            raise ValueError(msg + " (pass allow_coarse=True to override)")
        warnings.warn(msg, CoarseStepWarning, stacklevel=3)


def _step_count(t0: float, t_end: float, dt: float) -> int:
    n = int(math.ceil((t_end - t0) / dt - 1e-9))
    if n < 1:
        raise ValueError("t_end must exceed t0 by at least one step")
    return n


def integrate(rhs: Callable, x0, t_end: float, dt: float, t0: float = 0.0,
              period: Optional[float] = None, allow_coarse: bool = False) -> Trajectory:
    """Classical fixed-step RK4 for ``dx/dt = rhs(t, x)``.

    When ``period`` is given, steps coarser than period/100 are refused unless
    ``allow_coarse`` is set, in which case a warning is issued.
    """
    _check_step(dt, period, allow_coarse)
    n = _step_count(t0, t_end, dt)
    x = np.array(x0, dtype=float)
    out = np.empty((n + 1, x.size))
    out[0] = x
    h2 = 0.5 * dt
    h6 = dt / 6.0
    for i in range(n):
        t = t0 + i * dt
        k1 = np.asarray(rhs(t, x), dtype=float)
        k2 = np.asarray(rhs(t + h2, x + h2 * k1), dtype=float)
        k3 = np.asarray(rhs(t + h2, x + h2 * k2), dtype=float)
        k4 = np.asarray(rhs(t + dt, x + dt * k3), dtype=float)
        x_new = x + h6 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if not np.all(np.isfinite(x_new)):
            partial = Trajectory(t0, dt, out[: i + 1], period) if i >= 1 else None
            raise DivergenceError(t, x, partial)
        x = x_new
        out[i + 1] = x
    return Trajectory(t0, dt, out, period)


def kernel_params(cfg: EscConfig, coeffs: ModelCoefficients, smoothed: bool = False) -> tuple:
    c = coeffs
    return (c.g, c.k_d1, c.k_L, c.k_d2, c.k_d3, c.I_F, cfg.a, cfg.K, cfg.Omega,
            cfg.tauhat_gain(c), cfg.objective.code, cfg.lift_model.code,
            float(cfg.n_smooth) if smoothed else 0.0)


def simulate_closed_loop(coeffs: ModelCoefficients, cfg: EscConfig, x0, n_steps: int,
                         dt: Optional[float] = None, t0: float = 0.0, smoothed: bool = False,
                         backend: Optional[str] = None, allow_coarse: bool = False) -> Trajectory:
    """Integrate the closed loop for ``n_steps`` RK4 steps with the fast kernel."""
    dt = cfg.period / STEPS_PER_PERIOD if dt is None else dt
    _check_step(dt, cfg.period, allow_coarse)
    run = kernel.get_kernel(backend)
    out, done = run(tuple(float(v) for v in x0), float(t0), float(dt), int(n_steps),
                    kernel_params(cfg, coeffs, smoothed))
    if done < n_steps:
        partial = Trajectory(t0, dt, out[: done + 1], cfg.period, cfg, coeffs) if done >= 1 else None
        raise DivergenceError(t0 + done * dt, out[done], partial)
    return Trajectory(t0, dt, out, cfg.period, cfg, coeffs)


def _linear_slope(t: np.ndarray, y: np.ndarray) -> float:
    tc = t - t.mean()
    return float(np.dot(tc, y - y.mean()) / np.dot(tc, tc))


def measure_phi_amplitude(traj: Trajectory, window_periods: float = WINDOW_PERIODS,
                          min_cycles: int = 5) -> float:
    """Mean half peak-to-trough swing of phi over the trailing window.

    Extrema are located on the sample grid and refined by a parabola through
    the three neighbouring samples.
    """
    phi = traj.tail(window_periods).column("phi")
    d = np.diff(phi)
    idx = np.nonzero((d[:-1] > 0) & (d[1:] <= 0) | (d[:-1] < 0) & (d[1:] >= 0))[0] + 1
    values, kinds = [], []
    for i in idx:
        y0, y1, y2 = phi[i - 1], phi[i], phi[i + 1]
        curv = y2 - 2.0 * y1 + y0
        v = y1 - (y2 - y0) ** 2 / (8.0 * curv) if curv != 0 else y1
        kind = curv < 0 if curv != 0 else d[i - 1] > 0
        if kinds and kinds[-1] == kind:  # plateau duplicates: keep the more extreme
            if (v > values[-1]) == kind:
                values[-1] = v
            continue
        values.append(v)
        kinds.append(kind)
    swings = np.abs(np.diff(values)) / 2.0
    if len(swings) < 2 * min_cycles - 1:
        raise InsufficientDataError(
            f"only {len(values)} extrema in the trailing window; need {2 * min_cycles}")
    return float(swings.mean())


def compute_metrics(traj: Trajectory, window_periods: float = WINDOW_PERIODS,
                    w_tol: float = W_TOL, z_tol: float = Z_TOL) -> HoverMetrics:
    tail = traj.tail(window_periods)
    t = tail.t
    w = tail.column("w")
    th = tail.column("tau_hat")
    mean_w = float(w.mean())
    drift = _linear_slope(t, tail.column("z"))
    try:
        amp = measure_phi_amplitude(traj, window_periods)
    except InsufficientDataError:
        amp = math.nan
    return HoverMetrics(
        mean_w_tail=mean_w,
        z_drift_rate=drift,
        mean_lift_ratio=float(tail.lift_ratio().mean()),
        phi_amplitude=amp,
        settled=bool(abs(mean_w) < w_tol and abs(drift) < z_tol),
        tauhat_tail_mean=float(th.mean()),
        tauhat_drift_rate=_linear_slope(t, th),
        window_periods=window_periods,
    )


def _diverged_metrics(err: DivergenceError, window_periods: float) -> HoverMetrics:
    nan = math.nan
    return HoverMetrics(nan, nan, nan, nan, False, window_periods=window_periods,
                        diverged=True, t_diverged=err.t)


def run_hover(species: Species, cfg: EscConfig, w0: float = 0.2,
              duration: Optional[float] = None, duration_periods: Optional[float] = None,
              dt: Optional[float] = None, smoothed: bool = False, backend: Optional[str] = None,
              window_periods: float = WINDOW_PERIODS, allow_coarse: bool = False,
              ) -> tuple[Optional[Trajectory], HoverMetrics]:
    """Closed-loop hover from (z, phi, w, phidot, tau_hat) = (0, 0, w0, 0, 0).

    Duration defaults to 600 flapping periods at 200 steps per period. A
    divergent run returns the finite prefix and metrics flagged ``diverged``.
    """
    coeffs = species.coefficients
    dt = cfg.period / STEPS_PER_PERIOD if dt is None else dt
    if duration is None:
        duration = (DEFAULT_DURATION_PERIODS if duration_periods is None else duration_periods) * cfg.period
    if not duration > 0:
        raise ValueError("duration must be positive")
    n = _step_count(0.0, duration, dt)
    try:
        traj = simulate_closed_loop(coeffs, cfg, (0.0, 0.0, w0, 0.0, 0.0), n, dt,
                                    smoothed=smoothed, backend=backend, allow_coarse=allow_coarse)
    except DivergenceError as err:
        return err.trajectory, _diverged_metrics(err, window_periods)
    return traj, compute_metrics(traj, window_periods)


def run_open_loop(species: Species, cfg: EscConfig, w0: float = 0.2, **kwargs):
    """As :func:`run_hover` with the torque-estimate integrator switched off (K = 0)."""
    return run_hover(species, replace(cfg, K=0.0), w0, **kwargs)


# ---------------------------------------------------------------- sweeps

SWEEP_OVERRIDE_KEYS = ("a", "K", "Omega", "a_scale", "K_scale", "n_smooth", "lift_model",
                       "tauhat_law", "w0", "duration_periods", "smoothed")


@dataclass
class SweepCell:
    species: str
    objective: str
    overrides: dict = field(default_factory=dict)
    metrics: Optional[HoverMetrics] = None
    error: Optional[str] = None

    def to_dict(self) -> dict:
        return {"species": self.species, "objective": self.objective, "overrides": self.overrides,
                "metrics": self.metrics.to_dict() if self.metrics else None, "error": self.error}


def cell_config(species: Species, objective: str, overrides: dict) -> tuple[EscConfig, dict]:
    """Resolve one sweep cell into an EscConfig and the run keyword arguments."""
    unknown = set(overrides) - set(SWEEP_OVERRIDE_KEYS)
    if unknown:
        raise KeyError(f"unknown sweep override(s): {sorted(unknown)}")
    cfg = EscConfig.for_species(species, objective)
    changes = {k: overrides[k] for k in ("a", "K", "Omega", "n_smooth") if k in overrides}
    if "lift_model" in overrides:
        changes["lift_model"] = LiftModel(overrides["lift_model"])
    if "tauhat_law" in overrides:
        changes["tauhat_law"] = TauhatLaw(overrides["tauhat_law"])
    cfg = replace(cfg, **changes)
    if "a_scale" in overrides:
        cfg = replace(cfg, a=cfg.a * overrides["a_scale"])
    if "K_scale" in overrides:
        cfg = replace(cfg, K=cfg.K * overrides["K_scale"])
    run_kw = {"w0": overrides.get("w0", 0.2), "smoothed": bool(overrides.get("smoothed", False))}
    if "duration_periods" in overrides:
        run_kw["duration_periods"] = overrides["duration_periods"]
    return cfg, run_kw


def _run_cell(args) -> tuple[Optional[HoverMetrics], Optional[str]]:
    species_ref, objective, overrides, backend = args
    try:
        species = species_ref if isinstance(species_ref, Species) else load_species(species_ref)
        cfg, run_kw = cell_config(species, objective, overrides)
        _, metrics = run_hover(species, cfg, backend=backend, **run_kw)
        return metrics, None
    except Exception as exc:  # recorded per cell, never aborts the sweep
        return None, f"{type(exc).__name__}: {exc}"


def sweep(species: Sequence, objectives: Sequence = ("altitude", "lift_balance"),
          overrides: Optional[Sequence[dict]] = None, jobs: int = 1,
          backend: Optional[str] = None) -> list[SweepCell]:
    """Run every (species, objective, override set) cell.

    Cells are ordered by grid position regardless of completion order. An
    empty or missing override list means one default cell per pair.
    """
    if not species or not objectives:
        raise ValueError("sweep grid is empty")
    overrides = list(overrides) if overrides else [{}]
    grid = [(sp, Objective(ob).value, dict(ov)) for sp in species for ob in objectives for ov in overrides]
    tasks = [(sp, ob, ov, backend) for sp, ob, ov in grid]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_run_cell, tasks))
    else:
        results = [_run_cell(t) for t in tasks]
    cells = []
    for (sp, ob, ov), (metrics, error) in zip(grid, results):
        name = sp.name if isinstance(sp, Species) else str(sp)
        cells.append(SweepCell(name, ob, ov, metrics, error))
    return cells
