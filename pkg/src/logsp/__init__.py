"""Planar Schrodinger-Poisson equation with logarithmic convolution potential.

Grid discretization, fast log-kernel convolution, energy functionals, dilation
fibers, signed symmetry groups and variational solvers for

    -Lap u + u + (log|.| * u^2) u = |u|^(p-2) u   in R^2.
"""

__version__ = "0.1.0"

from .energy import EnergyBreakdown, Params, energy, euler_gradient
from .grid import Field, GridMismatchError, GridSpec
from .solver import SolverConfig, SolveReport, solve, solve_damped_flow, solve_fiber_projected
from .symmetry import SymmetryGroup

__all__ = [
    "EnergyBreakdown",
    "Field",
    "GridMismatchError",
    "GridSpec",
    "Params",
    "SolveReport",
    "SolverConfig",
    "SymmetryGroup",
    "energy",
    "euler_gradient",
    "solve",
    "solve_damped_flow",
    "solve_fiber_projected",
]
