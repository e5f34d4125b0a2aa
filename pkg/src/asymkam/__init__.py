"""Asymptotic KAM tori for Hamiltonians with decaying time-dependent perturbations."""

from .decay import (
    Constant, Exponential, Harmonic, Polynomial, Tabulated, TailOf, check_sharp, choose_upsilon,
    decay_from_dict,
)
from .field import FourierField, GridField, NormSpec, analytic_norm, holder_norm
from .hamiltonian import HamiltonianModel, build_model, quadratic_remainder, split
from .homological import solve_he
from .scenario import load_scenario
from .solver import (
    NonIntegrableError, SolverConfig, SolverFailure, TorusFamily, certify_decay, solve_torus,
    solve_torus_field,
)
from .verify import (
    asymptotic_defect, backward_roundtrip, conjugacy_defect, counterexample_divergence,
    extend_backward, integrate, lagrangian_defect,
)

__version__ = "0.1.0"
