"""Pure numpy fallback for the compiled kernels.

Active when the Cython extension is missing or ELL1_NO_EXT is set.
Semantics must match ell1._accel._fastkernels exactly; when the extension
is present the test suite cross-checks the two implementations.
"""

import numpy as np


def soft_threshold(u, a):
    return np.sign(u) * np.maximum(np.abs(u) - a, 0.0)


def project_box_linf(z):
    return np.clip(z, -1.0, 1.0)


def chol_update(R, v):
    """In-place rank-1 update of an upper factor: R'^T R' = R^T R + v v^T.

    Consumes v. Returns 0 (matches the status convention of chol_downdate).
    """
    n = R.shape[0]
    for k in range(n):
        rkk = R[k, k]
        r = np.hypot(rkk, v[k])
        c = r / rkk
        s = v[k] / rkk
        R[k, k] = r
        if k + 1 < n:
            row = (R[k, k + 1:] + s * v[k + 1:]) / c
            R[k, k + 1:] = row
            v[k + 1:] = c * v[k + 1:] - s * row
    return 0


def chol_downdate(R, v):
    """In-place rank-1 downdate: R'^T R' = R^T R - v v^T. Consumes v.

    Returns 0 on success, k+1 when definiteness is lost at pivot k; on
    failure R is partially modified and must be discarded by the caller.
    """
    n = R.shape[0]
    for k in range(n):
        rkk = R[k, k]
        d2 = (rkk - v[k]) * (rkk + v[k])
        if d2 <= 0.0:
            return k + 1
        r = np.sqrt(d2)
        c = r / rkk
        s = v[k] / rkk
        R[k, k] = r
        if k + 1 < n:
            row = (R[k, k + 1:] - s * v[k + 1:]) / c
            R[k, k + 1:] = row
            v[k + 1:] = c * v[k + 1:] - s * row
    return 0
