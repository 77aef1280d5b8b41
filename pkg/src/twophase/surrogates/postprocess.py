"""Approximate mass conservation and geometry enforcement for predicted bundles."""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
import torch

log = logging.getLogger(__name__)

DEFAULT_EPS = 4e-4
_ULP = np.finfo(np.float64).eps


class DegenerateMass(ValueError):
    pass


@dataclass(frozen=True)
class MassBudget:
    m_t: float
    eps: float = DEFAULT_EPS
    i: int = 1

    def __post_init__(self):
        if not self.eps > 0:
            raise ValueError("eps must be positive")
        if self.i < 1:
            raise ValueError("step offset i must be >= 1")


def _saturation(ie):
    # largest |tanh| that keeps m_hat / m_t - 1 representably inside (-ie, ie)
    return np.clip(1.0 - 16 * _ULP / ie, 0.0, 1.0)


def mass_correct(m_pred, budget: MassBudget):
    """Smoothly clipped target mass ``m_t (1 + i eps tanh((m_pred/m_t - 1) / (i eps)))``."""
    if not budget.m_t > 0:
        raise DegenerateMass(f"reference mass must be positive, got {budget.m_t}")
    ie = budget.i * budget.eps
    t = np.tanh((np.asarray(m_pred, dtype=np.float64) / budget.m_t - 1.0) / ie)
    cap = _saturation(ie)
    out = budget.m_t * (1.0 + ie * np.clip(t, -cap, cap))
    return float(out) if np.ndim(out) == 0 else out


def mass_targets(mass: torch.Tensor, m_t: torch.Tensor, eps: float) -> torch.Tensor:
    """Vectorised :func:`mass_correct` for ``mass`` of shape ``(B, k)`` and ``m_t`` of shape ``(B,)``."""
    k = mass.shape[1]
    ie = eps * torch.arange(1, k + 1, dtype=torch.float64, device=mass.device)
    cap = torch.clamp(1.0 - 16 * _ULP / ie, 0.0, 1.0)
    m_t = m_t.to(torch.float64)[:, None]
    t = torch.tanh((mass.to(torch.float64) / m_t - 1.0) / ie)
    return m_t * (1.0 + ie * torch.maximum(torch.minimum(t, cap), -cap))


def oil_mass_t(phi: torch.Tensor, fluid: torch.Tensor) -> torch.Tensor:
    """Oil fraction summed over FLUID cells for ``phi (B, k, H, W)``; returns ``(B, k)``."""
    return (0.5 * (phi + 1.0) * fluid).sum(dim=(-2, -1))


def postprocess(raw: torch.Tensor, fluid: torch.Tensor, m_t: torch.Tensor, eps: float = DEFAULT_EPS,
                enforce_geometry: bool = True, enforce_mass: bool = True) -> torch.Tensor:
    """Zero SOLID cells and rescale each frame's oil fraction toward its mass target.

    ``raw`` is ``(B, k, H, W)``, ``fluid`` a ``(B, 1, H, W)`` 0/1 tensor and
    ``m_t`` the ``(B,)`` reference masses. Frame ``i`` (1-based) of a bundle
    may deviate from ``m_t`` by at most ``i * eps``. Rescaling is
    multiplicative on the oil fraction, clamped to ``[0, 1]``.
    """
    out = raw * fluid if enforce_geometry else raw
    if not enforce_mass:
        return out
    # float64 keeps the identity case exact: (phi + 1) / 2 * 2 - 1 round-trips
    fl = fluid.to(torch.float64)
    oil = 0.5 * (out.to(torch.float64) + 1.0) * fl
    mass = oil.sum(dim=(-2, -1))
    m_t = m_t.to(torch.float64)
    ok = (mass > 0) & (m_t[:, None] > 0)
    if not bool(ok.all()):
        log.warning("skipping mass correction for %d frame(s) with zero oil mass", int((~ok).sum()))
    target = mass_targets(mass, torch.where(m_t > 0, m_t, torch.ones_like(m_t)), eps)
    scale = torch.where(ok, target / torch.where(ok, mass, torch.ones_like(mass)), torch.ones_like(mass))
    phi = 2.0 * torch.clamp(oil * scale[..., None, None], 0.0, 1.0) - 1.0
    return torch.where(fluid.bool(), phi.to(raw.dtype), out)


def relative_mass_bound(k: int, eps: float, n_blocks: int) -> float:
    """Cumulative bound on relative mass drift after ``n_blocks`` bundles."""
    return (1 + k * eps) ** n_blocks - 1


__all__ = ["DEFAULT_EPS", "DegenerateMass", "MassBudget", "mass_correct", "mass_targets", "oil_mass_t",
           "postprocess", "relative_mass_bound"]
