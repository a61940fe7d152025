"""Adaptive finite elements for pointwise tracking optimal control.

Piecewise linear state and adjoint, piecewise constant control, a
primal-dual active set solver, and a residual error estimator that drives
longest-edge bisection.
"""

from .adapt import LoopConfig, MarkingStrategy, Strategy, adaptive_loop, mark
from .errors import make_example
from .estimator import compute_indicators
from .mesh import Domain, Mesh, build_initial_mesh, prerefine_for_observations, refine
from .ocp import PdasConfig, ProblemSpec, pdas_solve

__all__ = [
    "Domain", "Mesh", "build_initial_mesh", "prerefine_for_observations", "refine",
    "ProblemSpec", "PdasConfig", "pdas_solve", "compute_indicators",
    "LoopConfig", "MarkingStrategy", "Strategy", "adaptive_loop", "mark", "make_example",
]

__version__ = "0.1.0"
