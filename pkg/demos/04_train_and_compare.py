"""
Training a small UNet and comparing it with the solver
======================================================

Expects a dataset directory produced by ``02_dataset.py`` (or the
``generate`` subcommand). Trains for a few epochs, rolls the surrogate out
on the test split and times it against the solver.
"""

import sys

import numpy as np

from twophase.datagen import load_split
from twophase.evaluation import persistence_mse, rollout_mse, time_inference
from twophase.solver import MaterialModel, SolverConfig
from twophase.surrogates import SurrogateConfig, build_model
from twophase.training import TrainConfig, train

if len(sys.argv) < 2:
    sys.exit("usage: python 04_train_and_compare.py DATA_DIR [EPOCHS]")
data = sys.argv[1]
epochs = int(sys.argv[2]) if len(sys.argv) > 2 else 5

train_recs, val_recs, test_recs = (load_split(data, s) for s in ("train", "val", "test"))
k = 5 if train_recs[0].n_frames < 40 else 10
cfg = SurrogateConfig(arch="UNET", k=k, hidden=16, multipliers=(1, 2))
result = train(build_model(cfg, seed=0), train_recs, val_recs, TrainConfig(epochs=epochs, samples_per_record=20, lr=1e-3))
for row in result.history:
    print(f"epoch {row['epoch']:3d}  unroll {row['n_unroll']}  train {row['train_mse']:.4f}"
          f"  val rollout {row['val_rollout_mse']:.4f}")

model = result.model
mse = np.mean([rollout_mse(model, r).mse for r in test_recs])
base = np.mean([persistence_mse(r, k) for r in test_recs])
print(f"\ntest rollout MSE {mse:.4f}   persistence {base:.4f}")

# One bundle of k frames against the k * stride solver steps it replaces.
rec = test_recs[0]
timing = time_inference(model, rec.mask, solver=(rec.scenario, rec.grid, MaterialModel(), SolverConfig()))
print(f"surrogate {timing.median * 1e3:.1f} ms per bundle, solver {timing.solver_time:.2f} s,"
      f" {timing.speed_ratio:.0f}x faster")
