"""Kinetic and nondegenerate fractional Fokker-Planck equations on periodic lattices.

Modules: ``grid`` (phase-space lattices), ``besov`` (dyadic blocks and norms),
``semigroup`` (kinetic and isotropic stable semigroups), ``kernels``
(interaction multipliers), ``fpe`` (mild-form solvers), ``mckv`` (particle
systems) and ``cli`` (experiment runner).
"""

from .grid import PhaseField, PhaseGrid
from .kernels import KernelSpec

__all__ = ["PhaseField", "PhaseGrid", "KernelSpec"]
__version__ = "0.1.0"
