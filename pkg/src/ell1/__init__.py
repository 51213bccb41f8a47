"""Sparse recovery by l1 minimization.

Eight solvers for the basis pursuit family (equality-constrained and
Lagrangian forms), robust variants built on an extended [A, I] dictionary,
synthetic instance generators, and a benchmark harness with a CLI.
"""

__version__ = "0.1.0"

from ell1._accel import COMPILED as kernels_compiled  # noqa: F401
