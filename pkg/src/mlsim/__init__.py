"""mlsim: pseudospectral simulator for coupled field-particle dynamics in a
2D periodic box, with a spinning extended charge.

The package is organised in layers:

    spectral   periodic-grid fields, FFT derivatives, solenoidal projection,
               charge-density construction
    kspace     closed-form Fourier-space integrals (momentum map, Jacobian
               partials) evaluated on the box dual lattice or by polar
               quadrature
    soliton    closed-form travelling/spinning solutions and the Newton
               inversion of the (v, omega) -> (P, M) map
    dynamics   time evolution of the reduced (comoving) and lab-frame
               canonical systems
    analysis   conserved-quantity monitors, energy lower bound, Jacobian
               tables, orbital-stability experiments
    cli        configuration, orchestration, file emission
"""

__version__ = "0.1.0"

from .spectral import (
    Grid,
    ScalarField,
    VectorField,
    ChargeDensity,
    make_charge_density,
    project_solenoidal,
    coulomb_potential,
    shift_density,
    norms,
)
from .soliton import SolitonParams, SolitonRecord, build_soliton, soliton_momenta, solve_soliton_params
from .dynamics import (
    ParticleKind,
    ReducedState,
    LabState,
    reduced_hamiltonian,
    particle_velocities,
    reduced_rhs,
    step_reduced,
    lab_rhs,
    step_lab,
    comoving_transform,
    lab_from_reduced,
    reconstruct_EB,
)
from .analysis import (
    Perturbation,
    JacobianTable,
    StabilityReport,
    distance,
    lower_bound_check,
    jacobian_entries,
    jacobian_vs_finite_difference,
    stability_experiment,
    conservation_monitor,
)

__all__ = [
    "Grid", "ScalarField", "VectorField", "ChargeDensity",
    "make_charge_density", "project_solenoidal", "coulomb_potential",
    "shift_density", "norms",
    "SolitonParams", "SolitonRecord", "build_soliton", "soliton_momenta",
    "solve_soliton_params",
    "ParticleKind", "ReducedState", "LabState", "reduced_hamiltonian",
    "particle_velocities", "reduced_rhs", "step_reduced", "lab_rhs",
    "step_lab", "comoving_transform", "lab_from_reduced", "reconstruct_EB",
    "Perturbation", "JacobianTable", "StabilityReport", "distance",
    "lower_bound_check", "jacobian_entries", "jacobian_vs_finite_difference",
    "stability_experiment", "conservation_monitor",
]
