"""Bundle prediction and autoregressive rollout."""
from __future__ import annotations

import numpy as np
import torch

from ..core import GeometryMask
from .models import SurrogateModel
from .postprocess import oil_mass_t, postprocess


def mask_tensor(mask, batch: int = 1) -> torch.Tensor:
    """FLUID flags as a float ``(B, 1, H, W)`` tensor from a GeometryMask, array or tensor."""
    if isinstance(mask, GeometryMask):
        mask = mask.fluid
    t = mask.float() if torch.is_tensor(mask) else torch.from_numpy(np.array(mask, dtype=np.float32))
    while t.dim() < 4:
        t = t.unsqueeze(0)
    if t.shape[0] == 1 and batch > 1:
        t = t.expand(batch, -1, -1, -1)
    return t


def as_frames(frames) -> torch.Tensor:
    t = torch.as_tensor(frames)
    if t.dtype != torch.float64:
        t = t.to(torch.float32)
    return t.unsqueeze(0) if t.dim() == 3 else t


def predict_bundle(model: SurrogateModel, frames, mask) -> torch.Tensor:
    """Next bundle from the current one; the mass reference is the last input frame.

    ``frames`` is ``(B, k, H, W)`` (or ``(k, H, W)``); gradients flow when enabled.
    """
    x = as_frames(frames)
    fluid = mask_tensor(mask, x.shape[0])
    cfg = model.cfg
    if x.shape[1] != cfg.k:
        raise ValueError(f"bundle has {x.shape[1]} frames, model expects {cfg.k}")
    if x.shape[-2:] != fluid.shape[-2:]:
        raise ValueError(f"frame dims {tuple(x.shape[-2:])} do not match mask {tuple(fluid.shape[-2:])}")
    raw = model(x, fluid)
    m_t = oil_mass_t(x[:, -1:].to(torch.float64), fluid.to(torch.float64))[:, 0]
    return postprocess(raw, fluid, m_t, cfg.mass_eps, cfg.enforce_geometry, cfg.enforce_mass)


@torch.no_grad()
def rollout(model: SurrogateModel, initial, mask, n_blocks: int) -> torch.Tensor:
    """Feed each predicted bundle back in; returns ``(B, n_blocks * k, H, W)``."""
    if n_blocks < 1:
        raise ValueError("n_blocks must be >= 1")
    x = as_frames(initial)
    out = []
    for _ in range(n_blocks):
        x = predict_bundle(model, x, mask)
        out.append(x)
    return torch.cat(out, dim=1)
