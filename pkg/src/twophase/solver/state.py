from __future__ import annotations

from dataclasses import asdict, dataclass, field, replace

import numpy as np


class TimeStepError(RuntimeError):
    """CFL limit exceeded; rerun with a smaller ``dt``."""


@dataclass(frozen=True)
class SolverConfig:
    dt: float = 0.02
    tolerance: float = 1e-8
    max_iterations: int = 10_000
    body_force: float = 4.0
    stride: int = 5
    cfl_max: float = 1.0
    # linear stabilisation of the explicit double-well, in units of the bulk coefficient
    ch_stabilizer: float = 2.0

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if not (0 < self.tolerance <= 1e-4):
            raise ValueError("tolerance must lie in (0, 1e-4]")
        if self.stride < 1:
            raise ValueError("stride must be >= 1")

    def as_dict(self) -> dict:
        return asdict(self)


@dataclass
class SolverState:
    """Fields at one instant.

    ``u``/``v`` are face velocities on the staggered grid (see
    :mod:`twophase.solver.operators`); ``c`` stacks the ``H+`` and ``H-``
    concentrations.
    """

    t: float
    u: np.ndarray
    v: np.ndarray
    p: np.ndarray
    phi: np.ndarray
    c: np.ndarray
    V: np.ndarray
    clipped_mass: float = 0.0

    def copy(self) -> "SolverState":
        return SolverState(self.t, self.u.copy(), self.v.copy(), self.p.copy(),
                           self.phi.copy(), self.c.copy(), self.V.copy(), self.clipped_mass)

    def cell_velocity(self) -> np.ndarray:
        """Collocated ``(2, H, W)`` velocity by face averaging."""
        return np.stack([0.5 * (self.u + np.roll(self.u, 1, 1)),
                         0.5 * (self.v + np.roll(self.v, 1, 0))])

    def evolve(self, **kw) -> "SolverState":
        return replace(self, **kw)


@dataclass
class DerivedFields:
    g_phi: np.ndarray
    g_c: np.ndarray
    rho_e: np.ndarray
    Dv: np.ndarray = field(default=None)
