"""Reference checks for the solver, shared by the unit and acceptance suites."""
import math

import numpy as np

from twophase.core import GeometryMask, GridSpec, ScenarioParams, ObstacleSpec, build_geometry_mask, oil_mass
from twophase.solver import (MaterialModel, SolverConfig, SolverState, derive, electrostatics_solve,
                             hydrodynamic_step, initial_state, material_properties, phase_transport_step, step)
from twophase.solver.electrostatics import face_fluxes, surface_flux_density
from twophase.solver.operators import divergence
from twophase.solver.steps import n_steps

SCENARIO = ScenarioParams(0.2, -5.0, (ObstacleSpec(0.6, 0.9, 0.15),), 0)


def zeros_state(grid, phi, c0=0.1, mask=None):
    z = np.zeros(grid.shape)
    fluid = np.ones(grid.shape, bool) if mask is None else mask.fluid
    c = np.stack([np.where(fluid, c0, 0.0)] * 2)
    return SolverState(0.0, z.copy(), z.copy(), z.copy(), phi, c, z.copy())


def taylor_green_decay(n=64, steps=500, dt=1e-5):
    """Return (measured, analytic) kinetic energy ratio after ``steps``."""
    g = GridSpec(n, n, domain_width=1.0)
    mask = GeometryMask.all_fluid(g)
    model = MaterialModel(rho_oil=1.0, mu_oil=1.0)
    cfg = SolverConfig(dt=dt, body_force=0.0)
    X, Y = g.cell_centers()
    k = 2 * math.pi
    u = np.sin(k * (X + g.dx / 2)) * np.cos(k * Y)
    v = -np.cos(k * X) * np.sin(k * (Y + g.dx / 2))
    s = zeros_state(g, -np.ones(g.shape))
    s = s.evolve(u=u, v=v)
    ke0 = (u ** 2 + v ** 2).sum()
    for _ in range(steps):
        u, v, p = hydrodynamic_step(s, derive(s, mask, model), mask, model, cfg)
        s = s.evolve(u=u, v=v, p=p, t=s.t + dt)
    nu = model.mu_water / model.rho_water
    return (s.u ** 2 + s.v ** 2).sum() / ke0, math.exp(-4 * nu * k * k * s.t)


def projection_divergence(steps=20):
    """Largest post-projection ``|div v|`` over a short droplet run, and the tolerance used."""
    g = GridSpec(48, 32)
    mask = build_geometry_mask(SCENARIO, g)
    model, cfg = MaterialModel(), SolverConfig()
    s = initial_state(SCENARIO, mask, model, cfg)
    worst = 0.0
    for _ in range(steps):
        s = step(s, mask, model, cfg, SCENARIO.surface_charge)
        div = divergence(s.u, s.v, g.dx)[mask.fluid]
        worst = max(worst, float(np.abs(div).max()))
        assert not s.u[~mask.open_x].any() and not s.v[~mask.open_y].any()
    return worst, cfg.tolerance


def phase_mass_drift(steps=50):
    """Largest per-step relative oil-mass change during a charged droplet run."""
    g = GridSpec(48, 32)
    mask = build_geometry_mask(SCENARIO.with_charge(-10.0), g)
    model, cfg = MaterialModel(), SolverConfig()
    s = initial_state(SCENARIO, mask, model, cfg)
    worst = 0.0
    for _ in range(steps):
        m0 = oil_mass(s.phi, mask)
        phi = phase_transport_step(s, derive(s, mask, model), mask, model, cfg)
        worst = max(worst, abs(oil_mass(phi, mask) - m0) / m0)
        s = step(s, mask, model, cfg, -10.0)
    return worst


def quiescent_drift(steps=100):
    g = GridSpec(48, 32)
    sc = ScenarioParams(0.2, 0.0, SCENARIO.obstacles)
    mask = build_geometry_mask(sc, g)
    model, cfg = MaterialModel(), SolverConfig(body_force=0.0)
    s0 = zeros_state(g, np.where(mask.fluid, -1.0, 0.0), MaterialModel().c0, mask)
    s = s0
    for _ in range(steps):
        s = step(s, mask, model, cfg, 0.0)
    return max(float(np.abs(getattr(s, f) - getattr(s0, f)).max()) for f in ("u", "v", "p", "phi", "c", "V"))


def _smooth_run(dt, T):
    g = GridSpec(32, 16, domain_width=2.0)
    mask = GeometryMask.channel(g)
    X, Y = g.cell_centers()
    model = MaterialModel(interface_width=4.0)
    cfg = SolverConfig(dt=dt, body_force=1.0)
    phi = np.where(mask.fluid, 0.5 * np.sin(math.pi * X) * np.cos(math.pi * Y), 0.0)
    s = zeros_state(g, phi, mask=mask)
    s = s.evolve(c=np.stack([np.where(mask.fluid, 0.1 + 0.02 * np.cos(math.pi * X), 0.0)] * 2))
    for _ in range(n_steps(T, dt)):
        s = step(s, mask, model, cfg)
    return np.concatenate([s.phi.ravel(), s.u.ravel(), s.v.ravel(), s.c.ravel()])


def splitting_order_ratio(dt=0.02, T=1.0):
    """Ratio of successive differences at ``dt, dt/2, dt/4``; about 2 for a first-order scheme."""
    a, b, c = (_smooth_run(dt / 2 ** j, T) for j in range(3))
    return np.abs(a - b).max() / np.abs(b - c).max()


def electrostatics_mms_errors(sizes=(32, 64, 128)):
    errs = []
    for w in sizes:
        g = GridSpec(w, w // 2 + 2, domain_width=1.0)
        mask = GeometryMask.channel(g)
        X, Y = g.cell_centers()
        Ly = 0.5
        exact = np.sin(2 * np.pi * X) * np.cos(np.pi * (Y - g.dx) / Ly)
        rho = (4 * np.pi ** 2 + (np.pi / Ly) ** 2) * exact
        V = electrostatics_solve(np.ones(g.shape), np.where(mask.fluid, rho, 0.0), mask, 0.0)
        errs.append(float(np.abs(V - exact)[mask.fluid].max()))
    return errs


def pore_flux_balance(charge=-10.0, grid=GridSpec(96, 64)):
    """Flux leaving the pore cavity through its mouth vs. the enclosed source.

    The enclosed source is the imposed surface flux ``charge * pi * r`` less
    the neutralising background inside the cavity.
    Returns ``(measured_outflow, expected_outflow, charge * arc_length)``.
    """
    sc = ScenarioParams(0.2, charge)
    mask = build_geometry_mask(sc, grid)
    eps = material_properties(-np.ones(grid.shape), MaterialModel())["eps"]
    V = electrostatics_solve(eps, np.zeros(grid.shape), mask, charge)
    _, fy = face_fluxes(V, eps, mask)
    mouth_row = int(np.nonzero(mask.cavity.any(axis=1))[0].min()) - 1
    outflow = -fy[mouth_row].sum() * grid.dx
    src = surface_flux_density(mask, charge)
    background = src[mask.fluid].sum() / mask.n_fluid * mask.cavity.sum()
    expected = -(src.sum() - background) * grid.dx ** 2
    return outflow, expected, charge * mask.pore_arc_length
