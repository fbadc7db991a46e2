"""Clusters of boundary bubbles for a critical Brezis-Nirenberg problem.

Closed-form bubble constants, domain geometry, background solutions, the
finite-dimensional reduction of the energy, and Monte-Carlo checks of the
expansion that drives it.
"""

from ._core import BACKEND
from .bubbles import Bubble, UniversalConstants, alpha_N, universal_constants
from .reduction import exponents, optimize_cluster, second_order_coeffs, solve_first_order

__version__ = "0.1.0"

__all__ = [
    "BACKEND",
    "Bubble",
    "UniversalConstants",
    "alpha_N",
    "exponents",
    "optimize_cluster",
    "second_order_coeffs",
    "solve_first_order",
    "universal_constants",
]
