"""Numerical toolkit for the critical Choquard problem on bounded domains.

Bubbles and universal constants, Dirichlet Green functions, projected
bubbles, the nonlocal HLS energy, multi-bubble expansions, bubble fitting
and the normalized gradient flow.
"""

__version__ = "0.1.0"

from .constants import (BubbleParams, UniversalConstants, bubble_eval, critical_exponents,
                        riesz_potential_closed_form, riesz_potential_quadrature, universal_constants)
from .energy import J_normalized, evaluate_functionals, grad_J, hls_energy, whole_space_J
from .errors import (ChoquardError, DomainError, EmptyGridError, GridMismatchError, NormalizationError,
                     QuadratureError, SingularityError, SolverError, ZeroFieldError)
from .expansion import BubbleConfiguration, bound_checks, eps_interaction, expansion_J
from .fitting import bubble_fit, v_membership
from .flow import run_flow, seed_field
from .geometry import Domain, Grid, ScalarField, dirichlet_inner_product, make_grid, poisson_solve
from .green import correction_for, green_eval, robin_function
from .projection import project_bubble, pu_cross_energy, pu_self_energy

__all__ = [
    "__version__", "BubbleParams", "UniversalConstants", "bubble_eval", "critical_exponents",
    "riesz_potential_closed_form", "riesz_potential_quadrature", "universal_constants",
    "J_normalized", "evaluate_functionals", "grad_J", "hls_energy", "whole_space_J",
    "ChoquardError", "DomainError", "EmptyGridError", "GridMismatchError", "NormalizationError",
    "QuadratureError", "SingularityError", "SolverError", "ZeroFieldError",
    "BubbleConfiguration", "bound_checks", "eps_interaction", "expansion_J",
    "bubble_fit", "v_membership", "run_flow", "seed_field",
    "Domain", "Grid", "ScalarField", "dirichlet_inner_product", "make_grid", "poisson_solve",
    "correction_for", "green_eval", "robin_function",
    "project_bubble", "pu_cross_energy", "pu_self_energy",
]
