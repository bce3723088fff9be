"""Canonical field points, the bracket engine and the 1+1D lattice lab."""

from .brackets import CanonicalExpr, bracket_pi_with_Bg, bracket_pi_with_Bg_direct, poisson_bracket
from .point import (
    FieldPoint,
    dof_count,
    flux_vector,
    hamiltonian_Hc,
    hamiltonian_tensor,
    hamiltonian_tilde,
    lagrangian_gamma_gamma,
    lagrangian_split,
    momentum_from_velocity,
    primary_constraint,
    tau_from_t,
    total_hamiltonian,
    velocity_from_momentum,
)
from .lattice import (
    FrontReport,
    LatticeField,
    Trajectory,
    energy_density,
    flux_density,
    front_diagnostics,
    gauss_energy,
    gauss_identity,
    hamilton_evolve,
    load_lattice_json,
    preset,
    total_energy,
)
