"""Scenario sampling and dataset generation.

A dataset directory holds one ``.tpf`` record per simulation and a
``manifest.json`` with the split assignment and the configuration echo.
"""
from __future__ import annotations

import json
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .core import (MIN_GAP, RADIUS_RANGE, ConfigurationError, GeometryError, GridSpec, ObstacleSpec,
                   ScenarioParams, periodic_dx, pore_center)
from .records import RecordFormatError, SimulationRecord, read_record, write_record
from .solver import MaterialModel, SolverConfig, simulate

log = logging.getLogger(__name__)

MANIFEST = "manifest.json"
OBSTACLE_MODES = ("none", "one-or-two")
PHI_BOUND = 1.05

__all__ = ["DatasetConfig", "ScenarioInfeasible", "sample_scenario", "scenario_seed", "split_counts",
           "assign_splits", "generate_dataset", "load_manifest", "load_split", "SimulationRecord",
           "RecordFormatError", "read_record", "write_record"]


class ScenarioInfeasible(GeometryError):
    pass


@dataclass(frozen=True)
class DatasetConfig:
    n_simulations: int = 920
    obstacle_mode: str = "one-or-two"
    width_cells: int = 96
    height_cells: int = 64
    domain_width: float = 3.0
    charge_bias: float = 2.0
    split: tuple = (0.7, 0.1, 0.2)
    base_seed: int = 0
    T_end: float = 50.0
    min_gap: float = MIN_GAP
    max_rejections: int = 1000
    max_resamples: int = 10

    def __post_init__(self):
        object.__setattr__(self, "split", tuple(float(f) for f in self.split))
        if self.n_simulations < 1:
            raise ConfigurationError("n_simulations must be >= 1")
        if self.obstacle_mode not in OBSTACLE_MODES:
            raise ConfigurationError(f"obstacle_mode must be one of {OBSTACLE_MODES}, got {self.obstacle_mode!r}")
        if len(self.split) != 3 or min(self.split) < 0 or not math.isclose(sum(self.split), 1.0):
            raise ConfigurationError(f"split fractions must be three non-negative numbers summing to 1, got {self.split}")
        if self.charge_bias <= 0:
            raise ConfigurationError("charge_bias must be positive")
        if self.T_end <= 0:
            raise ConfigurationError("T_end must be positive")

    @property
    def grid(self) -> GridSpec:
        return GridSpec(self.width_cells, self.height_cells, self.domain_width)

    def as_dict(self) -> dict:
        d = asdict(self)
        d["split"] = list(self.split)
        return d


def scenario_seed(base_seed: int, index: int, attempt: int = 0) -> int:
    """Per-scenario seed independent of the order in which scenarios are run."""
    return int(np.random.SeedSequence([base_seed, index, attempt]).generate_state(1, np.uint64)[0] >> 1)


def _sample_obstacle(rng, grid: GridSpec, placed, pore_r, gap):
    r = rng.uniform(*RADIUS_RANGE)
    lo, hi = grid.tube_bottom + r + gap, grid.tube_top - r - gap
    if hi <= lo:
        return None
    x = rng.uniform(0.0, grid.domain_width)
    y = rng.uniform(lo, hi)
    px, py = pore_center(grid)
    if math.hypot(periodic_dx(x, px, grid.domain_width), y - py) <= r + pore_r + gap:
        return None
    for ob in placed:
        if math.hypot(periodic_dx(x, ob.center_x, grid.domain_width), y - ob.center_y) <= r + ob.radius + gap:
            return None
    return ObstacleSpec(float(x), float(y), float(r))


def sample_scenario(rng: np.random.Generator, config: DatasetConfig, seed: int = 0) -> ScenarioParams:
    """Draw one scenario.

    The charge law ``-1 - 9 u**(1/b)`` puts more mass near -10 as ``b`` grows.
    Obstacles are placed by rejection so they keep ``min_gap`` from the walls,
    the pore and each other.
    """
    grid = config.grid
    radius = float(rng.uniform(*RADIUS_RANGE))
    charge = float(-1.0 - 9.0 * rng.uniform() ** (1.0 / config.charge_bias))
    obstacles = []
    if config.obstacle_mode != "none":
        count = int(rng.integers(1, 3))
        rejections = 0
        while len(obstacles) < count:
            ob = _sample_obstacle(rng, grid, obstacles, radius, config.min_gap)
            if ob is None:
                rejections += 1
                if rejections >= config.max_rejections:
                    raise ScenarioInfeasible(f"{rejections} consecutive obstacle rejections")
                continue
            rejections = 0
            obstacles.append(ob)
    return ScenarioParams(radius, charge, tuple(obstacles), seed)


def split_counts(n: int, fractions=(0.7, 0.1, 0.2)) -> tuple[int, int, int]:
    """``(train, val, test)`` sizes: val and test rounded (at least one each when n >= 3), train gets the rest."""
    if n < 3:
        return n, 0, 0
    n_val = max(1, int(math.floor(n * fractions[1] + 0.5))) if fractions[1] > 0 else 0
    n_test = max(1, int(math.floor(n * fractions[2] + 0.5))) if fractions[2] > 0 else 0
    return n - n_val - n_test, n_val, n_test


def assign_splits(n: int, fractions, seed: int) -> list[str]:
    n_train, n_val, _ = split_counts(n, fractions)
    order = np.random.default_rng(seed).permutation(n)
    labels = [""] * n
    for rank, idx in enumerate(order):
        labels[idx] = "train" if rank < n_train else ("val" if rank < n_train + n_val else "test")
    return labels


def _record_ok(rec: SimulationRecord) -> bool:
    return (rec.valid and rec.n_frames > 0 and bool(np.isfinite(rec.frames).all())
            and float(np.abs(rec.frames).max()) <= PHI_BOUND)


def _run_one(args):
    index, config, solver_cfg, model, out_dir = args
    grid = config.grid
    resampled = []
    for attempt in range(config.max_resamples + 1):
        seed = scenario_seed(config.base_seed, index, attempt)
        scenario = sample_scenario(np.random.default_rng(seed), config, seed)
        rec = simulate(scenario, grid, model, solver_cfg, config.T_end)
        if _record_ok(rec):
            name = f"sim_{index:05d}.tpf"
            write_record(rec, Path(out_dir) / name)
            return index, name, scenario, resampled
        log.warning("scenario %d attempt %d invalid (charge %.3f); resampling", index, attempt,
                    scenario.surface_charge)
        resampled.append(scenario.as_dict())
    raise RuntimeError(f"scenario {index}: no valid run after {config.max_resamples + 1} attempts")


def generate_dataset(config: DatasetConfig, solver_cfg: SolverConfig, model: MaterialModel, out_dir,
                     threads: int = 1) -> Path:
    """Simulate every scenario, write the records, then the manifest.

    Returns the manifest path. Diverged runs are replaced by resampled
    scenarios and listed in the manifest under ``resampled``.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    jobs = [(i, config, solver_cfg, model, str(out)) for i in range(config.n_simulations)]
    if threads > 1:
        with ProcessPoolExecutor(threads) as pool:
            results = list(pool.map(_run_one, jobs))
    else:
        results = [_run_one(j) for j in jobs]
    results.sort(key=lambda r: r[0])

    splits = assign_splits(config.n_simulations, config.split, config.base_seed)
    manifest = {
        "format": "TPF1",
        "base_seed": config.base_seed,
        "grid": config.grid.as_dict(),
        "dt": solver_cfg.dt,
        "stride": solver_cfg.stride,
        "dataset": config.as_dict(),
        "solver": solver_cfg.as_dict(),
        "material": model.as_dict(),
        "records": [{"file": name, "split": splits[i], "scenario": sc.as_dict()}
                    for i, name, sc, _ in results],
        "resampled": {str(i): rs for i, _, _, rs in results if rs},
    }
    path = out / MANIFEST
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True))
    return path


def load_manifest(data_dir) -> dict:
    path = Path(data_dir) / MANIFEST
    if not path.exists():
        raise FileNotFoundError(f"no {MANIFEST} in {data_dir}")
    return json.loads(path.read_text())


def load_split(data_dir, split: str) -> list[SimulationRecord]:
    """Records of one split (``train``, ``val`` or ``test``) in manifest order."""
    manifest = load_manifest(data_dir)
    return [read_record(Path(data_dir) / r["file"]) for r in manifest["records"] if r["split"] == split]
