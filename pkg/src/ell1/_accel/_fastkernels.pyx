# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled scalar-loop kernels.

Same contracts as ell1._accel.reference: fused soft threshold, l-inf box
projection, and the LINPACK-style rank-1 Cholesky update/downdate on an
upper factor.
"""

import numpy as np

from libc.math cimport hypot, sqrt


def soft_threshold(double[::1] u, double a):
    cdef Py_ssize_t i, n = u.shape[0]
    out_arr = np.empty(n, dtype=np.float64)
    cdef double[::1] out = out_arr
    cdef double x
    for i in range(n):
        x = u[i]
        if x > a:
            out[i] = x - a
        elif x < -a:
            out[i] = x + a
        else:
            out[i] = 0.0
    return out_arr


def project_box_linf(double[::1] z):
    cdef Py_ssize_t i, n = z.shape[0]
    out_arr = np.empty(n, dtype=np.float64)
    cdef double[::1] out = out_arr
    cdef double x
    for i in range(n):
        x = z[i]
        if x > 1.0:
            out[i] = 1.0
        elif x < -1.0:
            out[i] = -1.0
        else:
            out[i] = x
    return out_arr


def chol_update(double[:, ::1] R, double[::1] v):
    cdef Py_ssize_t k, j, n = R.shape[0]
    cdef double rkk, r, c, s, row
    for k in range(n):
        rkk = R[k, k]
        r = hypot(rkk, v[k])
        c = r / rkk
        s = v[k] / rkk
        R[k, k] = r
        for j in range(k + 1, n):
            row = (R[k, j] + s * v[j]) / c
            R[k, j] = row
            v[j] = c * v[j] - s * row
    return 0


def chol_downdate(double[:, ::1] R, double[::1] v):
    cdef Py_ssize_t k, j, n = R.shape[0]
    cdef double rkk, d2, r, c, s, row
    for k in range(n):
        rkk = R[k, k]
        d2 = (rkk - v[k]) * (rkk + v[k])
        if d2 <= 0.0:
            return k + 1
        r = sqrt(d2)
        c = r / rkk
        s = v[k] / rkk
        R[k, k] = r
        for j in range(k + 1, n):
            row = (R[k, j] - s * v[j]) / c
            R[k, j] = row
            v[j] = c * v[j] - s * row
    return 0
