"""Nonlinear kinetic and nondegenerate Fokker-Planck solvers."""

from .config import MonitorSpec, SolverConfig, SolverRun, check_invariants
from .diagnostics import (SmallnessIndices, decay_rate, mild_residual, smallness_margin,
                          stability_compare, weak_residual)
from .solver import march_solve, nonlinear_flux, nonlinear_term, picard_solve, solve

__all__ = [
    "MonitorSpec", "SolverConfig", "SolverRun", "SmallnessIndices", "check_invariants",
    "decay_rate", "march_solve", "mild_residual", "nonlinear_flux", "nonlinear_term",
    "picard_solve", "smallness_margin", "solve", "stability_compare", "weak_residual",
]
