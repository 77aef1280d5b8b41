"""
Generating a small trajectory dataset
=====================================

Samples scenarios (pore radius, charge, obstacles), simulates each one and
writes self-describing record files plus a manifest with the splits.
"""

import sys
import tempfile
from pathlib import Path

from twophase.datagen import DatasetConfig, generate_dataset, load_manifest, load_split
from twophase.solver import MaterialModel, SolverConfig

out = Path(sys.argv[1]) if len(sys.argv) > 1 else Path(tempfile.mkdtemp(prefix="twophase-data-"))

# Six short runs on the coarse grid; the full-scale protocol uses 920 runs at 96x64 to T = 50.
config = DatasetConfig(n_simulations=6, width_cells=48, height_cells=32, T_end=4.0, base_seed=1)
generate_dataset(config, SolverConfig(), MaterialModel(), out)

manifest = load_manifest(out)
for entry in manifest["records"]:
    sc = entry["scenario"]
    print(f"{entry['file']}  {entry['split']:5s}  r={sc['pore_radius']:.3f}  q={sc['surface_charge']:+.2f}"
          f"  obstacles={len(sc['obstacles'])}")

train = load_split(out, "train")
print(f"\n{len(train)} training records, each {train[0].n_frames} frames of {train[0].grid.shape}")
print("written to", out)
