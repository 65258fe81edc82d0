"""Spectral solver for the spatially homogeneous non-cutoff Boltzmann equation.

Maxwellian molecules with the angular kernel beta(theta) = kappa_beta |theta|^(-1-2s) on
0 < |theta| <= pi/4, expanded in the eigenbasis phi_{n,l,m} of the linearized operator.
"""

from .cascade import CascadeSolution, ExpPoly, SpectralState, cascade_solve, evaluate_solution
from .coefficients import CoeffTable, build_table, gamma_pair_expansion
from .galerkin import QuadraticSystem, assemble, integrate
from .models import KernelParams, ModeIndex, QuadratureSpec

__all__ = [
    "CascadeSolution",
    "CoeffTable",
    "ExpPoly",
    "KernelParams",
    "ModeIndex",
    "QuadraticSystem",
    "QuadratureSpec",
    "SpectralState",
    "assemble",
    "build_table",
    "cascade_solve",
    "evaluate_solution",
    "gamma_pair_expansion",
    "integrate",
]
