from .electrostatics import electrostatics_solve, face_fluxes, surface_flux_density
from .material import CHARGES, MaterialModel, material_properties
from .operators import SolverDivergence
from .state import DerivedFields, SolverConfig, SolverState, TimeStepError
from .steps import (chemical_potential, derive, hydrodynamic_step, initial_state, masked_laplacian,
                    phase_transport_step, simulate, solute_transport_step, step)

__all__ = [
    "CHARGES", "DerivedFields", "MaterialModel", "SolverConfig", "SolverDivergence", "SolverState",
    "TimeStepError", "chemical_potential", "derive", "electrostatics_solve", "face_fluxes",
    "hydrodynamic_step", "initial_state", "masked_laplacian", "material_properties",
    "phase_transport_step", "simulate", "solute_transport_step", "step", "surface_flux_density",
]
