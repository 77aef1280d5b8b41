"""Rollout metrics, timing, work-precision reports, sensitivity runs and ablations."""
from __future__ import annotations

import csv
import math
import platform
import statistics
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch

from .core import (CHARGE_RANGE, DropletDisintegrated, GeometryMask, GridSpec, ScenarioParams,
                   build_geometry_mask, droplet_center, oil_mass, periodic_dx)
from .records import SimulationRecord
from .solver import MaterialModel, SolverConfig, initial_state, simulate, step
from .surrogates import SurrogateConfig, SurrogateModel, mask_tensor, predict_bundle


class TimerResolutionError(RuntimeError):
    """A single repetition is too short to time reliably; time a larger batch instead."""


# --- predictors -------------------------------------------------------------

class OracleStub:
    """Returns the reference frames of one record (zero compute)."""

    def __init__(self, record: SimulationRecord, k: int):
        self.frames = torch.from_numpy(record.frames.copy())
        self.k = k

    def predict(self, x, fluid, start: int = 0):
        return self.frames[start:start + self.k].unsqueeze(0).expand(x.shape[0], -1, -1, -1)


class PersistenceStub:
    """Repeats the last input frame for the whole next bundle."""

    def __init__(self, k: int):
        self.k = k

    def predict(self, x, fluid, start: int = 0):
        return x[:, -1:].expand(-1, self.k, -1, -1).clone()


def _predictor(model):
    if isinstance(model, SurrogateModel):
        return model.cfg.k, lambda x, fluid, start: predict_bundle(model, x, fluid)
    return model.k, model.predict


def n_params(model) -> int:
    return model.n_params() if isinstance(model, SurrogateModel) else 0


# --- rollout metrics --------------------------------------------------------

@dataclass
class RolloutMetrics:
    mse: float
    block_mse: np.ndarray
    mass_drift: np.ndarray       # relative oil-mass change vs. the last input frame, per predicted frame
    trace: np.ndarray            # (n, 2) predicted droplet centre, NaN where disintegrated
    reference_trace: np.ndarray
    disintegrated: np.ndarray    # bool per predicted frame
    prediction: np.ndarray = field(repr=False, default=None)

    @property
    def first_disintegrated(self) -> int:
        idx = np.flatnonzero(self.disintegrated)
        return int(idx[0]) if idx.size else -1


def _centre(phi, mask):
    try:
        return droplet_center(phi, mask)
    except DropletDisintegrated:
        return (math.nan, math.nan)


def rollout_mse(model, record: SimulationRecord, keep_prediction: bool = False) -> RolloutMetrics:
    """Feed the first bundle and roll out to the end of the record.

    The MSE averages over FLUID cells of every predicted frame.
    """
    k, predict = _predictor(model)
    T = record.n_frames
    if T < 2 * k:
        raise ValueError(f"record has {T} frames, need at least {2 * k}")
    n_blocks = (T - k) // k
    fluid = mask_tensor(record.mask)
    x = torch.from_numpy(record.frames[:k].copy())[None]
    preds = []
    with torch.no_grad():
        for b in range(n_blocks):
            x = predict(x, fluid, k * (b + 1)).to(torch.float32)
            preds.append(x[0].numpy().astype(np.float64))
    pred = np.concatenate(preds)
    ref = record.frames[k:k + n_blocks * k].astype(np.float64)
    fl = record.mask.fluid
    sq = (pred - ref)[:, fl] ** 2
    block = sq.reshape(n_blocks, -1).mean(axis=1)
    m0 = oil_mass(record.frames[k - 1], record.mask)
    drift = np.array([oil_mass(f, record.mask) / m0 - 1.0 for f in pred]) if m0 > 0 else np.full(len(pred), np.nan)
    trace = np.array([_centre(f, record.mask) for f in pred])
    ref_trace = np.array([_centre(f, record.mask) for f in ref])
    return RolloutMetrics(float(sq.mean()), block, drift, trace, ref_trace, np.isnan(trace[:, 0]),
                          pred if keep_prediction else None)


def persistence_mse(record: SimulationRecord, k: int) -> float:
    """Closed form of the persistence rollout: every predicted frame equals frame ``k - 1``."""
    n = (record.n_frames - k) // k
    f = record.frames.astype(np.float64)[:, record.mask.fluid]
    return float(((f[k:k + n * k] - f[k - 1]) ** 2).mean())


def evaluate_records(model, records) -> list[dict]:
    rows = []
    for i, rec in enumerate(records):
        m = rollout_mse(model, rec)
        rows.append({"record": i, "charge": rec.scenario.surface_charge, "n_obstacles": len(rec.scenario.obstacles),
                     "mse": m.mse, "max_mass_drift": float(np.nanmax(np.abs(m.mass_drift))),
                     "first_disintegrated": m.first_disintegrated})
    return rows


# --- timing -----------------------------------------------------------------

def hardware_descriptor() -> dict:
    return {"machine": platform.machine(), "processor": platform.processor() or "unknown",
            "python": platform.python_version(), "torch": torch.__version__,
            "torch_threads": torch.get_num_threads()}


@dataclass
class TimingReport:
    median: float
    p10: float
    p90: float
    reps: int
    warmups: int
    samples: list
    solver_time: float = math.nan
    solver_steps: int = 0
    hardware: dict = field(default_factory=hardware_descriptor)

    @property
    def speed_ratio(self) -> float:
        return self.solver_time / self.median

    def as_dict(self) -> dict:
        return {"median_s": self.median, "p10_s": self.p10, "p90_s": self.p90, "reps": self.reps,
                "warmups": self.warmups, "solver_s": self.solver_time, "solver_steps": self.solver_steps,
                "speed_ratio": self.speed_ratio, **{f"hw_{k}": v for k, v in self.hardware.items()}}


def time_solver(scenario: ScenarioParams, grid: GridSpec, material: MaterialModel, cfg: SolverConfig,
                n_steps: int, mask: GeometryMask | None = None) -> float:
    """Wall-clock seconds for ``n_steps`` solver steps from the initial state (one warm-up step excluded)."""
    mask = build_geometry_mask(scenario, grid) if mask is None else mask
    state = step(initial_state(scenario, mask, material, cfg), mask, material, cfg, scenario.surface_charge)
    t0 = time.perf_counter()
    for _ in range(n_steps):
        state = step(state, mask, material, cfg, scenario.surface_charge)
    return time.perf_counter() - t0


def time_inference(model, mask, reps: int = 20, warmups: int = 3, seed: int = 0,
                   solver: tuple | None = None) -> TimingReport:
    """Median wall-clock of one bundle prediction on a fixed random input.

    ``solver`` is an optional ``(scenario, grid, material, solver_cfg)`` tuple;
    the solver is then timed for ``k * stride`` steps at the same resolution.
    """
    if reps < 20 or warmups < 3:
        raise ValueError("timing needs reps >= 20 and warmups >= 3")
    k, predict = _predictor(model)
    fluid = mask_tensor(mask)
    g = torch.Generator().manual_seed(seed)
    x = (torch.rand((1, k) + tuple(fluid.shape[-2:]), generator=g) * 2 - 1) * fluid
    with torch.no_grad():
        for _ in range(warmups):
            predict(x, fluid, k)
        samples = []
        for _ in range(reps):
            t0 = time.perf_counter()
            predict(x, fluid, k)
            samples.append(time.perf_counter() - t0)
    med = statistics.median(samples)
    res = time.get_clock_info("perf_counter").resolution
    if med < 10 * res:
        raise TimerResolutionError(f"median {med:.3g}s is under 10 timer ticks ({res:.3g}s); time a larger batch")
    q = np.quantile(samples, [0.1, 0.9])
    report = TimingReport(med, float(q[0]), float(q[1]), reps, warmups, samples)
    if solver is not None:
        scenario, grid, material, cfg = solver
        report.solver_steps = k * cfg.stride
        report.solver_time = time_solver(scenario, grid, material, cfg, report.solver_steps)
    return report


# --- work-precision ---------------------------------------------------------

WP_FIELDS = ("model_id", "params", "mse", "time_s")


def work_precision_report(models, records, reps: int = 20, warmups: int = 3) -> list[dict]:
    """One row per ``(model_id, model)`` pair, all evaluated on the same records."""
    rows = []
    for model_id, model in models:
        mse = float(np.mean([rollout_mse(model, r).mse for r in records]))
        t = time_inference(model, records[0].mask, reps, warmups).median
        rows.append({"model_id": model_id, "params": n_params(model), "mse": mse, "time_s": t})
    return rows


def pareto(rows) -> list[dict]:
    """Rows not beaten by another row in both MSE and time, sorted by time."""
    def dominated(a):
        return any(b["mse"] <= a["mse"] and b["time_s"] <= a["time_s"]
                   and (b["mse"] < a["mse"] or b["time_s"] < a["time_s"]) for b in rows)
    front = [r for r in rows if not dominated(r)]
    return sorted(front, key=lambda r: (r["time_s"], r["mse"], str(r["model_id"])))


def write_csv(rows, path, fields=None) -> Path:
    path = Path(path)
    rows = list(rows)
    fields = list(fields or (rows[0].keys() if rows else []))
    with path.open("w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=fields)
        w.writeheader()
        w.writerows(rows)
    return path


# --- sensitivity ------------------------------------------------------------

def charge_grid(base: float, perturbation: float, n: int) -> np.ndarray:
    """``n`` evenly spaced charges over ``base * (1 +- perturbation)``, clipped to the admissible range."""
    if n < 1 or perturbation < 0:
        raise ValueError("need n >= 1 and a non-negative perturbation")
    g = np.array([base]) if n == 1 else np.linspace(base * (1 + perturbation), base * (1 - perturbation), n)
    lo, hi = CHARGE_RANGE
    return np.clip(g, lo, hi)


def circular_wasserstein(a, b, period: float) -> float:
    """W1 distance between two empirical distributions on a circle of circumference ``period``.

    Uses ``min_mu  integral |F - G - mu|``, whose minimiser is a weighted median
    of ``F - G``.
    """
    a = np.sort(np.mod(np.asarray(a, dtype=float), period))
    b = np.sort(np.mod(np.asarray(b, dtype=float), period))
    if a.size == 0 or b.size == 0:
        return math.nan
    pts = np.unique(np.concatenate([[0.0], a, b, [period]]))
    left, width = pts[:-1], np.diff(pts)
    h = np.searchsorted(a, left, side="right") / a.size - np.searchsorted(b, left, side="right") / b.size
    order = np.argsort(h)
    cw = np.cumsum(width[order])
    mu = h[order][np.searchsorted(cw, 0.5 * cw[-1])]
    return float(np.sum(width * np.abs(h - mu)))


@dataclass
class SensitivityResult:
    charges: np.ndarray
    timestamps: list
    reference: np.ndarray       # (n, len(timestamps)) droplet x, NaN where excluded
    surrogate: np.ndarray
    period: float

    @property
    def excluded_reference(self) -> list:
        return [int(c) for c in np.isnan(self.reference).sum(axis=0)]

    @property
    def excluded_surrogate(self) -> list:
        return [int(c) for c in np.isnan(self.surrogate).sum(axis=0)]

    def distances(self) -> list:
        out = []
        for j in range(len(self.timestamps)):
            r, s = self.reference[:, j], self.surrogate[:, j]
            out.append(circular_wasserstein(r[~np.isnan(r)], s[~np.isnan(s)], self.period))
        return out

    def rows(self) -> list[dict]:
        return [{"charge": float(c), "timestamp": t, "reference_x": float(self.reference[i, j]),
                 "surrogate_x": float(self.surrogate[i, j])}
                for i, c in enumerate(self.charges) for j, t in enumerate(self.timestamps)]


def sensitivity_experiment(model, base: ScenarioParams, perturbation: float, n: int, timestamps,
                           grid: GridSpec, material: MaterialModel, solver_cfg: SolverConfig,
                           T_end: float) -> SensitivityResult:
    """Reference runs and surrogate rollouts over a charge grid; droplet x at frame indices ``timestamps``."""
    charges = charge_grid(base.surface_charge, perturbation, n)
    ts = [int(t) for t in timestamps]
    ref = np.full((len(charges), len(ts)), np.nan)
    sur = np.full_like(ref, np.nan)
    mask = build_geometry_mask(base, grid)
    for i, q in enumerate(charges):
        rec = simulate(base.with_charge(float(q)), grid, material, solver_cfg, T_end, mask)
        k = _predictor(model)[0]
        bad = [t for t in ts if not k <= t < rec.n_frames]
        if bad:
            raise ValueError(f"timestamps {bad} outside the predicted range [{k}, {rec.n_frames})")
        m = rollout_mse(model, rec)
        for j, t in enumerate(ts):
            ref[i, j] = _centre(rec.frames[t], mask)[0]
            if t - k < len(m.trace):
                sur[i, j] = m.trace[t - k, 0]
    return SensitivityResult(charges, ts, ref, sur, grid.domain_width)


def periodic_error(a, b, period: float):
    return np.abs(periodic_dx(np.asarray(a), np.asarray(b), period))


# --- ablations --------------------------------------------------------------

@dataclass(frozen=True)
class AblationFlags:
    periodicity: bool = True
    mass: bool = True
    geometry: bool = True

    NAMES = ("all", "no-inv", "no-bc", "no-obs")

    @classmethod
    def named(cls, name: str) -> "AblationFlags":
        # no-obs keeps the full model; it swaps the dataset instead
        table = {"all": cls(), "no-obs": cls(), "no-inv": cls(periodicity=False, mass=False),
                 "no-bc": cls(geometry=False)}
        if name not in table:
            raise ValueError(f"unknown ablation {name!r}; choose from {', '.join(cls.NAMES)}")
        return table[name]


ABLATION_COLUMNS = {"all": "All", "no-inv": "\\Inv", "no-bc": "\\BC", "no-obs": "\\Obs"}


def apply_ablation(cfg: SurrogateConfig, flags: AblationFlags) -> SurrogateConfig:
    return cfg.replace(periodic=flags.periodicity, enforce_mass=flags.mass, enforce_geometry=flags.geometry)


__all__ = [
    "ABLATION_COLUMNS", "AblationFlags", "OracleStub", "PersistenceStub", "RolloutMetrics", "SensitivityResult",
    "TimerResolutionError", "TimingReport", "apply_ablation", "charge_grid", "circular_wasserstein",
    "evaluate_records", "hardware_descriptor", "n_params", "pareto", "persistence_mse", "rollout_mse",
    "sensitivity_experiment", "time_inference", "time_solver", "work_precision_report", "write_csv",
]
