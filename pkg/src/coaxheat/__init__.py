"""Spectral Galerkin solver for a four-region counterflow heat exchanger.

Regions are the fluid ``f``, separating wall ``s``, gas ``g`` and insulating
wall ``p`` on the unit interval.  Typical use::

    from coaxheat import build_problem, shift_to_homogeneous, assemble_system, solve_trajectory

    problem = shift_to_homogeneous(build_problem(config))
    system = assemble_system(problem, m=16)
    traj = solve_trajectory(system, T=1.0, dt=1e-3, scheme="crank-nicolson")
"""

from .assembly import GalerkinSystem, assemble_system, project_field
from .basis import REGIONS, BasisFamily, build_basis, check_orthonormality
from .estimates import (
    EnergyConstants,
    EnergyReport,
    check_contraction,
    check_energy_inequality,
    check_gronwall_bound,
    derive_constants,
    norms,
    regularity_report,
    weak_residual,
)
from .expr import Expression, differentiate, evaluate, parse
from .integrate import SCHEMES, CoefficientTrajectory, SolutionField, reconstruct, solve_trajectory
from .model import HomogeneousProblem, ProblemError, ProblemSpec, build_problem, shift_to_homogeneous, unshift
from .quadrature import QuadratureRule, gauss_rule

__version__ = "0.1.0"

__all__ = [
    "REGIONS",
    "SCHEMES",
    "BasisFamily",
    "CoefficientTrajectory",
    "EnergyConstants",
    "EnergyReport",
    "Expression",
    "GalerkinSystem",
    "HomogeneousProblem",
    "ProblemError",
    "ProblemSpec",
    "QuadratureRule",
    "SolutionField",
    "assemble_system",
    "build_basis",
    "build_problem",
    "check_contraction",
    "check_energy_inequality",
    "check_gronwall_bound",
    "check_orthonormality",
    "derive_constants",
    "differentiate",
    "evaluate",
    "gauss_rule",
    "norms",
    "parse",
    "project_field",
    "reconstruct",
    "regularity_report",
    "shift_to_homogeneous",
    "solve_trajectory",
    "unshift",
    "weak_residual",
]
