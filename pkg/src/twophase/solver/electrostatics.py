"""Variable-permittivity Gauss law with a charged pore surface."""
from __future__ import annotations

import numpy as np

from ..core import GeometryMask
from .operators import NeumannSolver, harmonic_x, harmonic_y, link_operator, scatter


def surface_flux_density(mask: GeometryMask, surface_charge: float) -> np.ndarray:
    """Per-cell boundary source ``eps dV/dn`` integrated over the cell's pore faces / dx**2.

    The imposed flux is spread over the staircase faces so the total equals
    ``surface_charge`` times the analytic arc length of the pore.
    """
    count = mask.pore_surface
    n_faces = count.sum()
    if n_faces == 0 or surface_charge == 0.0:
        return np.zeros(mask.grid.shape)
    dx = mask.grid.dx
    per_face = surface_charge * mask.pore_arc_length / n_faces
    return count * per_face / dx ** 2


def electrostatics_solve(eps: np.ndarray, rho_e: np.ndarray, mask: GeometryMask,
                         surface_charge: float, tol: float = 1e-8) -> np.ndarray:
    """Solve ``div(eps grad V) = -rho_e`` on the FLUID cells.

    Faces use the harmonic mean of ``eps``; pore faces carry the flux
    ``eps dV/dn = surface_charge``, every other solid face is insulating and
    the horizontal axis is periodic. A pure-Neumann problem only has a
    solution for zero net charge, so any net charge is balanced by a uniform
    background over the connected fluid region. ``V`` has zero mean over FLUID.
    """
    fluid = mask.fluid
    dx = mask.grid.dx
    e = np.where(fluid, eps, 1.0)
    cx = np.where(mask.open_x, harmonic_x(e), 0.0)
    cy = np.where(mask.open_y, harmonic_y(e), 0.0)
    A, index = link_operator(fluid, cx, cy, dx)
    rhs = (-rho_e - surface_flux_density(mask, surface_charge))[fluid]
    if not np.any(rhs):
        return np.zeros(mask.grid.shape)
    x = NeumannSolver(A, fluid).solve(rhs, tol)
    return scatter(x, index, fluid.shape)


def face_fluxes(V: np.ndarray, eps: np.ndarray, mask: GeometryMask):
    """Discrete ``eps dV/dx`` and ``eps dV/dy`` on open faces (zero elsewhere)."""
    dx = mask.grid.dx
    e = np.where(mask.fluid, eps, 1.0)
    fx = np.where(mask.open_x, harmonic_x(e) * (np.roll(V, -1, 1) - V) / dx, 0.0)
    fy = np.where(mask.open_y, harmonic_y(e) * (np.roll(V, -1, 0) - V) / dx, 0.0)
    return fx, fy
