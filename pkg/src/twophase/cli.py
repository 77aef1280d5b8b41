"""Command-line entry point: ``twophase <subcommand> --config FILE --out DIR``."""
from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from pathlib import Path

import numpy as np
import torch

from . import __version__
from .config import RunConfig, load_config
from .core import ConfigurationError, GridSpec, ObstacleSpec, ScenarioParams, build_geometry_mask
from .datagen import generate_dataset, load_manifest, load_split
from .evaluation import (ABLATION_COLUMNS, AblationFlags, PersistenceStub, apply_ablation, evaluate_records,
                         hardware_descriptor, pareto, persistence_mse, rollout_mse, sensitivity_experiment,
                         time_inference, work_precision_report, write_csv)
from .surrogates import build_model, load_checkpoint
from .training import train

log = logging.getLogger("twophase")

RUN_MANIFEST = "run_manifest.json"
COMMANDS = ("generate", "train", "evaluate", "bench", "sensitivity", "ablate")


def _grid_of(data_dir) -> GridSpec:
    return GridSpec(**load_manifest(data_dir)["grid"])


def _option(args, cfg: RunConfig, section: str, key: str, required=True):
    val = getattr(args, key, None)
    if val is None:
        val = cfg.section(section).get(key, cfg.section("paths").get(key))
    if val is None and required:
        raise ConfigurationError(f"[{section}] {key}: required (config key or --{key} flag)")
    return val


def _check_grid(meta: dict, grid: GridSpec, where: str):
    trained = meta.get("grid")
    if trained is None:
        return
    if (trained["width_cells"], trained["height_cells"]) != (grid.width_cells, grid.height_cells):
        raise ConfigurationError(
            f"{where}: grid {grid.width_cells}x{grid.height_cells} does not match the model's training grid "
            f"{trained['width_cells']}x{trained['height_cells']}")


def _scenario(sec: dict) -> ScenarioParams:
    obstacles = tuple(ObstacleSpec(*o) for o in sec.get("obstacles", []))
    return ScenarioParams(float(sec.get("pore_radius", 0.2)), float(sec.get("charge", -8.65)), obstacles,
                          int(sec.get("seed", 0)))


# --- pipelines --------------------------------------------------------------

def run_generate(cfg: RunConfig, args, out: Path) -> list:
    manifest = generate_dataset(cfg.dataset, cfg.solver, cfg.material, out, args.threads)
    return sorted(str(out / r["file"]) for r in load_manifest(out)["records"]) + [str(manifest)]


def _train_one(cfg: RunConfig, model_cfg, data_dir, out: Path) -> Path:
    grid = _grid_of(data_dir)
    model = build_model(model_cfg, cfg.train.seed)
    train(model, load_split(data_dir, "train"), load_split(data_dir, "val"), cfg.train, out,
          meta={"grid": grid.as_dict(), "data": str(data_dir)})
    return out / "best.ckpt"


def run_train(cfg: RunConfig, args, out: Path) -> list:
    data = Path(_option(args, cfg, "paths", "data"))
    ckpt = _train_one(cfg, cfg.model, data, out)
    return [str(out / "history.csv"), str(ckpt)]


def run_evaluate(cfg: RunConfig, args, out: Path) -> list:
    data = Path(_option(args, cfg, "evaluate", "data"))
    model, meta = load_checkpoint(_option(args, cfg, "evaluate", "model"))
    _check_grid(meta, _grid_of(data), "--data")
    split = cfg.section("evaluate").get("split", "test")
    records = load_split(data, split)
    if not records:
        raise ConfigurationError(f"[evaluate] split: no records in split {split!r}")
    rows = evaluate_records(model, records)
    k = model.cfg.k
    for row, rec in zip(rows, records):
        row["persistence_mse"] = persistence_mse(rec, k)
    per_record = write_csv(rows, out / "per_record.csv")
    wp = work_precision_report([(model.cfg.arch, model), ("persistence", PersistenceStub(k))], records)
    wp_path = write_csv(wp, out / "work_precision.csv")
    front = write_csv(pareto(wp), out / "pareto.csv")
    summary = {"mse": float(np.mean([r["mse"] for r in rows])),
               "persistence_mse": float(np.mean([r["persistence_mse"] for r in rows])), "n_records": len(rows)}
    (out / "summary.json").write_text(json.dumps(summary, indent=2))
    return [str(per_record), str(wp_path), str(front), str(out / "summary.json")]


def _model_from(cfg: RunConfig, sec: dict):
    if sec.get("model"):
        return load_checkpoint(sec["model"])
    return build_model(cfg.model, cfg.train.seed).eval(), {}


def run_bench(cfg: RunConfig, args, out: Path) -> list:
    sec = cfg.section("bench")
    if args.model:
        sec["model"] = args.model
    model, meta = _model_from(cfg, sec)
    grid = cfg.dataset.grid
    _check_grid(meta, grid, "[dataset]")
    scenario = _scenario(sec)
    mask = build_geometry_mask(scenario, grid)
    rep = time_inference(model, mask, int(sec.get("reps", 20)), int(sec.get("warmups", 3)),
                         seed=cfg.train.seed, solver=(scenario, grid, cfg.material, cfg.solver))
    row = {"model_id": model.cfg.arch, "params": model.n_params(), **rep.as_dict()}
    path = write_csv([row], out / "timing.csv")
    log.info("surrogate %.4fs per bundle, solver %.2fs, ratio %.1fx", rep.median, rep.solver_time, rep.speed_ratio)
    return [str(path)]


def run_sensitivity(cfg: RunConfig, args, out: Path) -> list:
    sec = cfg.section("sensitivity")
    if args.model:
        sec["model"] = args.model
    model, meta = _model_from(cfg, sec)
    grid = cfg.dataset.grid
    _check_grid(meta, grid, "[dataset]")
    timestamps = sec.get("timestamps")
    if not timestamps:
        raise ConfigurationError("[sensitivity] timestamps: required list of frame indices")
    res = sensitivity_experiment(model, _scenario(sec), float(sec.get("perturbation", 0.2)),
                                 int(sec.get("n", 31)), timestamps, grid, cfg.material, cfg.solver,
                                 float(sec.get("T_end", cfg.dataset.T_end)))
    samples = write_csv(res.rows(), out / "sensitivity_samples.csv")
    dist = [{"timestamp": t, "wasserstein": d, "excluded_reference": er, "excluded_surrogate": es}
            for t, d, er, es in zip(res.timestamps, res.distances(), res.excluded_reference, res.excluded_surrogate)]
    summary = write_csv(dist, out / "sensitivity_summary.csv")
    return [str(samples), str(summary)]


def run_ablate(cfg: RunConfig, args, out: Path) -> list:
    sec = cfg.section("ablate")
    names = args.flags.split(",") if args.flags else sec.get("flags", ["all", "no-inv", "no-bc", "no-obs"])
    if isinstance(names, str):
        names = names.split(",")
    names = [n.strip() for n in names]
    for n in names:
        try:
            AblationFlags.named(n)
        except ValueError as err:
            raise ConfigurationError(f"--flags: {err}") from None
    data = Path(_option(args, cfg, "ablate", "data"))
    row, artifacts = {"arch": cfg.model.arch}, []
    for name in names:
        src = data
        if name == "no-obs":
            src = Path(_option(args, cfg, "ablate", "data_no_obstacles"))
        variant = apply_ablation(cfg.model, AblationFlags.named(name))
        ckpt = _train_one(cfg, variant, src, out / name)
        model, _ = load_checkpoint(ckpt)
        row[ABLATION_COLUMNS[name]] = float(np.mean([rollout_mse(model, r).mse for r in load_split(src, "test")]))
        artifacts += [str(ckpt), str(out / name / "history.csv")]
    path = write_csv([row], out / "ablation_summary.csv")
    return artifacts + [str(path)]


PIPELINES = {"generate": run_generate, "train": run_train, "evaluate": run_evaluate, "bench": run_bench,
             "sensitivity": run_sensitivity, "ablate": run_ablate}


# --- entry point ------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="twophase", description="Two-phase flow data generation and surrogates.")
    parser.add_argument("--version", action="version", version=f"twophase {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, metavar="{" + ",".join(COMMANDS) + "}")
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="INI-style config file (or .json)")
        p.add_argument("--out", required=True, help="output directory")
        p.add_argument("--seed", type=int, default=None, help="override every seed in the config")
        p.add_argument("--threads", type=int, default=1)
        p.add_argument("-v", "--verbose", action="store_true")
        if name in ("train", "evaluate", "ablate"):
            p.add_argument("--data", default=None, help="dataset directory")
        if name in ("evaluate", "bench", "sensitivity"):
            p.add_argument("--model", default=None, help="checkpoint file")
        if name == "ablate":
            p.add_argument("--flags", default=None, help="comma-separated: all,no-inv,no-bc,no-obs")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    t0 = time.perf_counter()
    try:
        cfg = load_config(args.config)
        if args.seed is not None:
            cfg = cfg.with_seed(args.seed)
        if args.threads < 1:
            raise ConfigurationError("--threads: must be >= 1")
        cfg = cfg.with_threads(args.threads)
        torch.set_num_threads(args.threads)
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        artifacts = PIPELINES[args.command](cfg, args, out)
    except ConfigurationError as err:
        print(f"config error: {err}", file=sys.stderr)
        return 2
    except Exception as err:  # pipeline failures are reported, not raised
        log.debug("pipeline failure", exc_info=True)
        print(f"error: {type(err).__name__}: {err}", file=sys.stderr)
        return 1
    manifest = {"command": args.command, "config": cfg.as_dict(), "seed": args.seed,
                "artifacts": artifacts, "wall_clock_s": time.perf_counter() - t0, "version": __version__,
                "hardware": hardware_descriptor()}
    (out / RUN_MANIFEST).write_text(json.dumps(manifest, indent=2, default=str))
    return 0


if __name__ == "__main__":
    sys.exit(main())
