"""Dictionary operators.

Solvers touch the measurement matrix only through this interface so the
robust variants can swap in structured dictionaries (the [A, I] extension)
whose identity blocks are never materialized.
"""

import numpy as np

from ell1 import numerics


class DenseDictionary:
    """Explicit dense dictionary D of shape (d, N)."""

    def __init__(self, A):
        self.A = np.ascontiguousarray(A, dtype=np.float64)
        if self.A.ndim != 2:
            raise ValueError("dictionary must be a matrix")
        self._norm_sq = None

    @property
    def shape(self):
        return self.A.shape

    def apply(self, w):
        return self.A @ w

    def adjoint(self, r):
        return self.A.T @ r

    def apply_columns(self, idx, coeffs):
        return self.A[:, idx] @ coeffs

    def columns_dot(self, idx, v):
        return self.A[:, idx].T @ v

    def column(self, j):
        return self.A[:, j]

    def gram_column(self, idx, j):
        return self.A[:, idx].T @ self.A[:, j]

    def column_norms_sq(self):
        return np.sum(self.A * self.A, axis=0)

    def norm_sq(self):
        """Largest eigenvalue of D^T D (cached)."""
        if self._norm_sq is None:
            self._norm_sq = numerics.spectral_norm_sq(self.A)
        return self._norm_sq

    def weighted_gram_dd(self, w):
        """D diag(w) D^T as a dense (d, d) matrix."""
        return (self.A * w) @ self.A.T

    def gram_dd(self):
        return self.A @ self.A.T
