"""
Surrogate architectures and their adaptations
=============================================

Builds the four processor variants, checks that a horizontal shift of the
input commutes with a prediction, and shows the mass correction at work.
"""

import torch

from twophase.core import GridSpec, ScenarioParams, build_geometry_mask
from twophase.surrogates import MassBudget, SurrogateConfig, build_model, mass_correct, oil_mass_t, predict_bundle

grid = GridSpec(48, 32)
mask = build_geometry_mask(ScenarioParams(0.2, -5.0), grid)
fluid = torch.from_numpy(mask.fluid.astype("float32"))[None, None]

# A random bundle of k = 5 frames restricted to the fluid.
torch.manual_seed(0)
x = (torch.rand(1, 5, 32, 48) * 2 - 1) * fluid

configs = {
    "DRN": SurrogateConfig(arch="DRN", k=5, hidden=16, layers=1),
    "UNet": SurrogateConfig(arch="UNET", k=5, hidden=16, multipliers=(1, 2)),
    "U-FNO": SurrogateConfig(arch="UFNO", k=5, hidden=16, layers=1, modes=6, multipliers=(1,)),
    "U-FNO + FNO": SurrogateConfig(arch="UFNO_ALT", k=5, hidden=16, layers=1, modes=6, multipliers=(1,)),
}

with torch.no_grad():
    for name, cfg in configs.items():
        for periodic in (True, False):
            model = build_model(cfg.replace(periodic=periodic, enforce_mass=periodic), seed=0).eval()
            shifted_in = predict_bundle(model, torch.roll(x, 7, -1), mask.shifted(7))
            shifted_out = torch.roll(predict_bundle(model, x, mask), 7, -1)
            err = (shifted_in - shifted_out).abs().max().item()
            label = "circular padding" if periodic else "zero padding"
            print(f"{name:12s} {label:16s}  params {model.n_params():7d}  shift error {err:.1e}")

# Each predicted frame i may drift from the reference mass by at most i * eps.
model = build_model(configs["UNet"], seed=0).eval()
with torch.no_grad():
    y = predict_bundle(model, x, mask)
m_ref = oil_mass_t(x[:, -1:].double(), fluid.double())[0, 0]
print("\nrelative mass per predicted frame:", (oil_mass_t(y.double(), fluid.double())[0] / m_ref - 1).numpy())

# The correction law itself: a 1% excess gets squashed to just under eps.
print("mass_correct(1.01, m_t=1) =", mass_correct(1.01, MassBudget(1.0)))
