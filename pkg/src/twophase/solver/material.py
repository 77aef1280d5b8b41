"""Phase-dependent material coefficients."""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np


@dataclass(frozen=True)
class MaterialModel:
    """Nondimensional two-phase material constants.

    ``+`` is oil (phi = 1), ``-`` is water (phi = -1). ``interface_width`` is
    given in cells so the same model can be reused across resolutions.
    """

    rho_oil: float = 0.9
    rho_water: float = 1.0
    mu_oil: float = 2.0
    mu_water: float = 1.0
    eps_oil: float = 0.5
    eps_water: float = 1.0
    mobility: float = 1e-3
    k_pos_oil: float = 1e-2
    k_pos_water: float = 1e-2
    k_neg_oil: float = 1e-2
    k_neg_water: float = 1e-2
    sigma: float = 0.3
    interface_width: float = 1.0
    c0: float = 0.1

    def __post_init__(self):
        for name, val in asdict(self).items():
            if not (val > 0 and math.isfinite(val)):
                raise ValueError(f"material coefficient {name} must be positive, got {val}")
        if self.interface_width < 1.0:
            raise ValueError("interface_width must be at least one cell")

    def delta(self, dx: float) -> float:
        return self.interface_width * dx

    def bulk_coeff(self, dx: float) -> float:
        """Coefficient of ``phi**3 - phi`` in the chemical potential."""
        return 3 * self.sigma / (2 * math.sqrt(2) * self.delta(dx))

    def gradient_coeff(self, dx: float) -> float:
        """Coefficient of ``-lap(phi)`` in the chemical potential."""
        return 3 * self.sigma * self.delta(dx) / (2 * math.sqrt(2))

    @property
    def drho(self) -> float:
        """d rho / d phi for the linear rule."""
        return 0.5 * (self.rho_oil - self.rho_water)

    @property
    def deps(self) -> float:
        return 0.5 * (self.eps_oil - self.eps_water)

    def as_dict(self) -> dict:
        return asdict(self)


CHARGES = (1, -1)


def _lerp(phi, minus, plus):
    w = 0.5 * (np.clip(phi, -1.0, 1.0) + 1.0)
    return minus + (plus - minus) * w


def material_properties(phi: np.ndarray, model: MaterialModel) -> dict:
    """Cellwise ``rho, mu, eps, M, K`` (``K`` stacked per species ``H+, H-``)."""
    return {
        "rho": _lerp(phi, model.rho_water, model.rho_oil),
        "mu": _lerp(phi, model.mu_water, model.mu_oil),
        "eps": _lerp(phi, model.eps_water, model.eps_oil),
        "M": np.full_like(phi, model.mobility, dtype=float),
        "K": np.stack([_lerp(phi, model.k_pos_water, model.k_pos_oil),
                       _lerp(phi, model.k_neg_water, model.k_neg_oil)]),
    }
