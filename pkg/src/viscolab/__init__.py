"""Numerical lab for fully nonlinear elliptic equations with Pucci structure."""

from .core import (
    CoefficientField,
    Domain,
    Grid,
    GridFunction,
    Modulus,
    lp_norm,
    make_modulus,
    sample_coefficient,
)
from .eigen import EigenConfig, EigenPair, eigen_solve, eigen_upper_bound_sigma, mp_small_domain, simplicity_check
from .operators import ExtremalOperator, PointwiseOperator, StructureParams, SymMatrix, pucci
from .solve import ProblemSpec, Solution, SolverConfig, SolverError, residual, solve_dirichlet, solve_pure

__version__ = "0.1.0"

__all__ = [
    "CoefficientField", "Domain", "Grid", "GridFunction", "Modulus", "lp_norm", "make_modulus",
    "sample_coefficient",
    "EigenConfig", "EigenPair", "eigen_solve", "eigen_upper_bound_sigma", "mp_small_domain",
    "simplicity_check",
    "ExtremalOperator", "PointwiseOperator", "StructureParams", "SymMatrix", "pucci",
    "ProblemSpec", "Solution", "SolverConfig", "SolverError", "residual", "solve_dirichlet", "solve_pure",
]
