"""Split time stepping for the coupled phase-field / Navier-Stokes / Nernst-Planck system."""
from __future__ import annotations

import logging
import math

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from ..core import GeometryMask, GridSpec, ScenarioParams, build_geometry_mask, periodic_dx, pore_center
from ..records import SimulationRecord
from .electrostatics import electrostatics_solve
from .material import CHARGES, MaterialModel, material_properties
from .operators import (NeumannSolver, SolverDivergence, avg_x, avg_y, check_residual, corner_avg,
                        divergence, east, grad_x, grad_y, link_operator, north, scatter, south,
                        upwind_flux, west)
from .state import DerivedFields, SolverConfig, SolverState, TimeStepError

log = logging.getLogger(__name__)

C_FLOOR = 1e-12


def masked_laplacian(f: np.ndarray, mask: GeometryMask) -> np.ndarray:
    """5-point Laplacian with zero flux through closed faces."""
    fx = np.where(mask.open_x, east(f) - f, 0.0)
    fy = np.where(mask.open_y, north(f) - f, 0.0)
    return (fx - west(fx) + fy - south(fy)) / mask.grid.dx ** 2 * mask.fluid


def chemical_potential(phi: np.ndarray, mask: GeometryMask, model: MaterialModel) -> np.ndarray:
    """Ginzburg-Landau chemical potential of the phase field (no electric part)."""
    dx = mask.grid.dx
    a, b = model.bulk_coeff(dx), model.gradient_coeff(dx)
    g = a * (phi ** 3 - phi) - b * masked_laplacian(phi, mask)
    return np.where(mask.fluid, g, 0.0)


def field_energy_density(V: np.ndarray, mask: GeometryMask) -> np.ndarray:
    """Cell average of ``|grad V|**2`` from open-face differences."""
    dx = mask.grid.dx
    gx2 = np.where(mask.open_x, grad_x(V, dx), 0.0) ** 2
    gy2 = np.where(mask.open_y, grad_y(V, dx), 0.0) ** 2
    return 0.5 * (gx2 + west(gx2) + gy2 + south(gy2))


def electric_potential_term(phi, V, mask, model):
    """Dielectric contribution ``-eps'(phi) |grad V|^2 / 2`` to the phase chemical potential.

    ``eps`` is linear in the clamped phase, so ``eps'`` vanishes for ``|phi| >= 1``.
    """
    deps = np.where(np.abs(phi) < 1.0, model.deps, 0.0)
    return np.where(mask.fluid, -0.5 * deps * field_energy_density(V, mask), 0.0)


def symmetric_gradient(u, v, dx):
    """Cell-centred ``(Dv)_ab = (d_a v_b + d_b v_a) / 2`` as a ``(2, 2, H, W)`` array."""
    uc = 0.5 * (u + west(u))
    vc = 0.5 * (v + south(v))
    ux = (u - west(u)) / dx
    vy = (v - south(v)) / dx
    uy = (north(uc) - south(uc)) / (2 * dx)
    vx = (east(vc) - west(vc)) / (2 * dx)
    off = 0.5 * (uy + vx)
    return np.array([[ux, off], [off, vy]])


def derive(state: SolverState, mask: GeometryMask, model: MaterialModel) -> DerivedFields:
    z = np.array(CHARGES, dtype=float)[:, None, None]
    g_phi = chemical_potential(state.phi, mask, model) + electric_potential_term(state.phi, state.V, mask, model)
    g_c = np.log(state.c + C_FLOOR) + z * state.V
    rho_e = (z * state.c).sum(axis=0)
    return DerivedFields(g_phi=g_phi, g_c=g_c, rho_e=rho_e,
                         Dv=symmetric_gradient(state.u, state.v, mask.grid.dx))


def _check_cfl(u, v, dx, cfg: SolverConfig):
    cfl = max(np.abs(u).max(), np.abs(v).max()) * cfg.dt / dx
    if not np.isfinite(cfl) or cfl > cfg.cfl_max:
        raise TimeStepError(f"CFL number {cfl:.3f} exceeds {cfg.cfl_max}; reduce dt")


def _ch_solver(mask: GeometryMask, model: MaterialModel, cfg: SolverConfig):
    dx = mask.grid.dx
    S = cfg.ch_stabilizer * model.bulk_coeff(dx)
    key = ("ch", cfg.dt, model.mobility, model.gradient_coeff(dx), S)
    if key not in mask._cache:
        L, index = link_operator(mask.fluid, mask.open_x.astype(float), mask.open_y.astype(float), dx)
        M, b, dt = model.mobility, model.gradient_coeff(dx), cfg.dt
        A = sp.identity(L.shape[0], format="csc") - dt * M * S * L + dt * M * b * (L @ L)
        mask._cache[key] = (splu(A.tocsc()), A.tocsr(), index, S)
    return mask._cache[key]


def phase_transport_step(state: SolverState, derived: DerivedFields, mask: GeometryMask,
                         model: MaterialModel, cfg: SolverConfig) -> np.ndarray:
    """Advance phi by one step of advection + Cahn-Hilliard in flux form.

    Advection is explicit (limited upwind fluxes); the biharmonic part and a
    linear stabiliser are implicit, the double-well and electric parts explicit.
    """
    dx, dt = mask.grid.dx, cfg.dt
    _check_cfl(state.u, state.v, dx, cfg)
    phi = state.phi
    fx = upwind_flux(phi, state.u, mask.open_x, axis=1)
    fy = upwind_flux(phi, state.v, mask.open_y, axis=0)
    lu, A, index, S = _ch_solver(mask, model, cfg)
    a = model.bulk_coeff(dx)
    g_explicit = a * (phi ** 3 - phi) - S * phi
    rhs = phi - dt * divergence(fx, fy, dx) + dt * model.mobility * masked_laplacian(g_explicit, mask)
    b = rhs[mask.fluid]
    x = lu.solve(b)
    check_residual(A, x, b, cfg.tolerance)
    return scatter(x, index, phi.shape)


def solute_transport_step(state: SolverState, derived: DerivedFields, mask: GeometryMask,
                          model: MaterialModel, cfg: SolverConfig):
    """Advance both species; returns ``(c_new, clipped_mass)``.

    Diffusion is implicit, advection and electric drift explicit. Negative
    values are clipped to zero and the removed mass returned.
    """
    dx, dt = mask.grid.dx, cfg.dt
    _check_cfl(state.u, state.v, dx, cfg)
    K = material_properties(state.phi, model)["K"]
    V = state.V
    out = np.zeros_like(state.c)
    clipped = 0.0
    for j, z in enumerate(CHARGES):
        c = state.c[j]
        k = np.where(mask.fluid, K[j], 0.0)
        kx = np.where(mask.open_x, avg_x(k), 0.0)
        ky = np.where(mask.open_y, avg_y(k), 0.0)
        fx = upwind_flux(c, state.u, mask.open_x, axis=1) - kx * z * avg_x(c) * grad_x(V, dx)
        fy = upwind_flux(c, state.v, mask.open_y, axis=0) - ky * z * avg_y(c) * grad_y(V, dx)
        rhs = c - dt * divergence(np.where(mask.open_x, fx, 0.0), np.where(mask.open_y, fy, 0.0), dx)
        L, index = link_operator(mask.fluid, kx, ky, dx)
        A = (sp.identity(L.shape[0], format="csr") - dt * L).tocsc()
        b = rhs[mask.fluid]
        x = splu(A).solve(b)
        check_residual(A, x, b, cfg.tolerance)
        neg = x < 0
        if neg.any():
            clipped += float(-x[neg].sum())
            x[neg] = 0.0
        out[j] = scatter(x, index, c.shape)
    if clipped:
        log.debug("clipped %.3e of solute mass", clipped)
    return out, clipped


def _transposed_viscous(u, v, mu, dx):
    """Explicit ``div(mu grad(v)^T)``; vanishes for constant ``mu`` and solenoidal ``v``."""
    s = mu * (u - west(u)) / dx
    tx = (east(s) - s) / dx
    q = corner_avg(mu) * (east(v) - v) / dx
    tx += (q - south(q)) / dx
    s = mu * (v - south(v)) / dx
    ty = (north(s) - s) / dx
    r = corner_avg(mu) * (north(u) - u) / dx
    ty += (r - west(r)) / dx
    return tx, ty


def _solve_faces(unknown, rho_f, cx, cy, rhs, dx, dt, tol):
    L, index = link_operator(unknown, cx, cy, dx, dirichlet=True)
    A = (sp.diags(rho_f[unknown] / dt) - L).tocsc()
    b = rhs[unknown]
    x = splu(A).solve(b)
    check_residual(A, x, b, tol)
    return scatter(x, index, unknown.shape)


def hydrodynamic_step(state: SolverState, derived: DerivedFields, mask: GeometryMask,
                      model: MaterialModel, cfg: SolverConfig):
    """One projection step for the momentum balance; returns ``(u, v, p)``."""
    dx, dt = mask.grid.dx, cfg.dt
    u, v = state.u, state.v
    _check_cfl(u, v, dx, cfg)
    ox, oy, fl = mask.open_x, mask.open_y, mask.fluid
    props = material_properties(state.phi, model)
    rho = np.where(fl, props["rho"], model.rho_water)
    mu = np.where(fl, props["mu"], model.mu_water)
    rho_x, rho_y = avg_x(rho), avg_y(rho)

    # momentum carried by phase diffusion: J = rho'(phi) M grad g_phi
    g = derived.g_phi
    jx = np.where(ox, model.drho * model.mobility * grad_x(g, dx), 0.0)
    jy = np.where(oy, model.drho * model.mobility * grad_y(g, dx), 0.0)
    wx, wy = u - jx / rho_x, v - jy / rho_y
    wy_u = 0.25 * (wy + east(wy) + south(wy) + south(east(wy)))
    wx_v = 0.25 * (wx + west(wx) + north(wx) + north(west(wx)))
    adv_u = rho_x * (wx * (east(u) - west(u)) + wy_u * (north(u) - south(u))) / (2 * dx)
    adv_v = rho_y * (wx_v * (east(v) - west(v)) + wy * (north(v) - south(v))) / (2 * dx)

    tx, ty = _transposed_viscous(u, v, mu, dx)

    phi = state.phi
    fx = -avg_x(phi) * grad_x(g, dx) + cfg.body_force
    fy = -avg_y(phi) * grad_y(g, dx)
    for j, z in enumerate(CHARGES):
        c = state.c[j]
        fx -= grad_x(c, dx) + z * avg_x(c) * grad_x(state.V, dx)
        fy -= grad_y(c, dx) + z * avg_y(c) * grad_y(state.V, dx)

    # incremental pressure correction: the old pressure enters the predictor
    p_old = state.p
    rhs_u = rho_x * u / dt - adv_u + tx + fx - grad_x(p_old, dx)
    rhs_v = rho_y * v / dt - adv_v + ty + fy - grad_y(p_old, dx)
    cmu = corner_avg(mu)
    us = _solve_faces(ox, rho_x, east(mu), cmu, rhs_u, dx, dt, cfg.tolerance)
    vs = _solve_faces(oy, rho_y, cmu, north(mu), rhs_v, dx, dt, cfg.tolerance)

    bx = np.where(ox, 1.0 / rho_x, 0.0)
    by = np.where(oy, 1.0 / rho_y, 0.0)
    Lp, index = link_operator(fl, bx, by, dx)
    div_star = divergence(us, vs, dx)[fl] / dt
    if np.any(div_star):
        dp = scatter(NeumannSolver(Lp, fl).solve(div_star, cfg.tolerance), index, fl.shape)
    else:
        dp = np.zeros(fl.shape)
    u_new = np.where(ox, us - dt * bx * grad_x(dp, dx), 0.0)
    v_new = np.where(oy, vs - dt * by * grad_y(dp, dx), 0.0)
    p = np.where(fl, p_old + dp, 0.0)
    return u_new, v_new, p - p[fl].mean()


def step(state: SolverState, mask: GeometryMask, model: MaterialModel, cfg: SolverConfig,
         surface_charge: float = 0.0) -> SolverState:
    """Advance one ``dt``: (i) electrochemistry, (ii) phase transport, (iii) hydrodynamics."""
    z = np.array(CHARGES, dtype=float)[:, None, None]
    eps = material_properties(state.phi, model)["eps"]
    rho_e = (z * state.c).sum(axis=0)
    V = electrostatics_solve(eps, rho_e, mask, surface_charge, cfg.tolerance)
    s = state.evolve(V=V)
    c, clipped = solute_transport_step(s, derive(s, mask, model), mask, model, cfg)
    s = s.evolve(c=c, clipped_mass=state.clipped_mass + clipped)

    phi = phase_transport_step(s, derive(s, mask, model), mask, model, cfg)
    s = s.evolve(phi=phi)

    u, v, p = hydrodynamic_step(s, derive(s, mask, model), mask, model, cfg)
    return s.evolve(u=u, v=v, p=p, t=state.t + cfg.dt)


def initial_phase(scenario: ScenarioParams, mask: GeometryMask, model: MaterialModel) -> np.ndarray:
    """Oil disc of the pore radius centred on the pore mouth, tanh-smoothed."""
    grid = mask.grid
    X, Y = grid.cell_centers()
    px, py = pore_center(grid)
    d = np.hypot(periodic_dx(X, px, grid.domain_width), Y - py)
    phi = np.tanh((scenario.pore_radius - d) / (math.sqrt(2) * model.delta(grid.dx)))
    return np.where(mask.fluid, phi, 0.0)


def initial_state(scenario: ScenarioParams, mask: GeometryMask, model: MaterialModel,
                  cfg: SolverConfig) -> SolverState:
    shape = mask.grid.shape
    phi = initial_phase(scenario, mask, model)
    c = np.stack([np.where(mask.fluid, model.c0, 0.0)] * 2)
    eps = material_properties(phi, model)["eps"]
    V = electrostatics_solve(eps, np.zeros(shape), mask, scenario.surface_charge, cfg.tolerance)
    zeros = np.zeros(shape)
    return SolverState(0.0, zeros.copy(), zeros.copy(), zeros.copy(), phi, c, V)


def n_steps(T_end: float, dt: float) -> int:
    return int(round(T_end / dt))


def simulate(scenario: ScenarioParams, grid: GridSpec, model: MaterialModel, cfg: SolverConfig,
             T_end: float, mask: GeometryMask | None = None) -> SimulationRecord:
    """Run the solver to ``T_end`` storing phi every ``cfg.stride`` steps.

    A mid-run failure returns the frames produced so far with ``valid=False``.
    """
    mask = build_geometry_mask(scenario, grid) if mask is None else mask
    total = n_steps(T_end, cfg.dt)
    state = initial_state(scenario, mask, model, cfg)
    frames = []
    valid = True
    try:
        for n in range(1, total + 1):
            state = step(state, mask, model, cfg, scenario.surface_charge)
            if n % cfg.stride == 0:
                frames.append(np.where(mask.fluid, state.phi, 0.0).astype(np.float32))
    except (SolverDivergence, TimeStepError, FloatingPointError) as err:
        log.warning("simulation diverged at t=%.3f: %s", state.t, err)
        valid = False
    data = np.stack(frames) if frames else np.zeros((0,) + grid.shape, np.float32)
    return SimulationRecord(scenario=scenario, mask=mask, frames=data, dt=cfg.dt,
                            stride=cfg.stride, valid=valid)
