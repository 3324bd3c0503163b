"""Affine pure-jump Markov processes on the cone of PSD matrices.

The package realizes, at a fixed matrix dimension, the machinery around
cone-valued affine jump processes: admissible parameter sets (params),
cone-preserving solution of the generalized Riccati transform equations
with a small-jump truncation cascade (riccati), closed-form moment and
Laplace formulas (moments), and piecewise-deterministic Monte Carlo
simulation that cross-validates them (pdmpsim).
"""

from . import symcone, params, riccati, moments, pdmpsim, library
from .exceptions import AffineHSError

__version__ = "0.1.0"

__all__ = [
    "symcone",
    "params",
    "riccati",
    "moments",
    "pdmpsim",
    "library",
    "AffineHSError",
    "__version__",
]
