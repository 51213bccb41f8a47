"""Primal-dual interior-point solver for equality-constrained l1 recovery.

The signed problem min ||x||_1 s.t. A x = b becomes a standard-form LP by
splitting x into nonnegative parts: minimize 1'v subject to [A, -A] v = b,
v >= 0. A damped Newton step on the perturbed complementarity conditions is
taken each iteration; eliminating the slack block reduces the linear algebra
to one d x d Cholesky solve of the weighted normal matrix.
"""

import time
from dataclasses import dataclass

import numpy as np

from ell1 import numerics
from ell1.exceptions import IllConditionedError, NotPositiveDefiniteError
from ell1.model import SolverResult, TraceEntry, support_size

_BOUNDARY = 0.99  # fraction-to-boundary damping
_SIGMA = 0.1      # centering: target a tenth of the current duality measure
_FEAS_TOL = 1e-8
_GAP_TOL = 1e-6


@dataclass
class PdipaState:
    """Strictly interior primal-dual iterate of the split LP."""

    x: np.ndarray   # length 2n, > 0
    y: np.ndarray   # length d
    z: np.ndarray   # length 2n, > 0
    mu: float       # duality measure x'z / (2n)


def _step_to_boundary(v, dv):
    """Largest multiple of dv keeping v + a*dv positive, damped."""
    neg = dv < 0
    if not np.any(neg):
        return 1.0
    return min(1.0, _BOUNDARY * float(np.min(-v[neg] / dv[neg])))


def _factor_with_jitter(M):
    try:
        return numerics.chol_factor(M)
    except NotPositiveDefiniteError:
        jitter = 1e-12 * max(np.trace(M) / M.shape[0], 1.0)
        bumped = M + jitter * np.eye(M.shape[0])
        try:
            return numerics.chol_factor(bumped)
        except NotPositiveDefiniteError as exc:
            raise IllConditionedError("weighted normal matrix is singular") from exc


def _eliminate(x, z, rp, rd, rc, apply_ext, adjoint_ext, M):
    """Solve the three-block Newton system by eliminating dz then dx."""
    w = x / z
    rhs = rp - apply_ext(rc / z - w * rd)
    dy = _factor_with_jitter(M).solve(rhs)
    dz = rd - adjoint_ext(dy)
    dx = rc / z - w * dz
    return dx, dy, dz


def newton_kkt_step(state, A_ext, b, mu_hat, c=None):
    """Newton direction on the perturbed optimality system.

    Solves, for the current strictly interior state,
        A_ext dx            = b - A_ext x
        A_ext' dy + dz      = c - A_ext' y - z
        Z dx + X dz         = mu_hat 1 - X Z 1
    and verifies the solution to 1e-8 relative residual; a step that cannot
    be recovered to that accuracy raises IllConditionedError.
    """
    A_ext = np.asarray(A_ext, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    x, y, z = state.x, state.y, state.z
    if c is None:
        c = np.ones(x.shape[0])
    rp = b - A_ext @ x
    rd = c - A_ext.T @ y - z
    rc = mu_hat - x * z
    M = (A_ext * (x / z)) @ A_ext.T
    dx, dy, dz = _eliminate(x, z, rp, rd, rc,
                            lambda u: A_ext @ u, lambda v: A_ext.T @ v, M)
    scale = max(1.0, np.linalg.norm(rp), np.linalg.norm(rd),
                np.linalg.norm(rc))
    ok = (np.linalg.norm(A_ext @ dx - rp) <= 1e-8 * scale
          and np.linalg.norm(A_ext.T @ dy + dz - rd) <= 1e-8 * scale
          and np.linalg.norm(z * dx + x * dz - rc) <= 1e-8 * scale)
    if not ok or not (np.all(np.isfinite(dx)) and np.all(np.isfinite(dy))
                      and np.all(np.isfinite(dz))):
        raise IllConditionedError("Newton system residual did not close")
    return dx, dy, dz


def pdipa_solve(P, config, observer=None):
    """Interior-point solve of min ||x||_1 s.t. A x = b.

    Returns the recombined signed estimate. observer, when given, receives
    the PdipaState after every accepted step.
    """
    A, b = P.A, P.b
    d, n = A.shape
    t0 = time.perf_counter()
    if np.linalg.norm(b) == 0.0:
        return SolverResult(np.zeros(n), 0, time.perf_counter() - t0, True,
                            [TraceEntry(0, 0.0, 0.0, 0)])

    two_n = 2 * n
    c = np.ones(two_n)
    x = np.ones(two_n)
    y = np.zeros(d)
    z = np.ones(two_n)
    mu = float(x @ z) / two_n
    b_scale = max(1.0, float(np.linalg.norm(b)))
    c_scale = 1.0 + np.sqrt(two_n)
    gap_tol = min(config.tol, _GAP_TOL)

    def apply_ext(u):
        return A @ (u[:n] - u[n:])

    def adjoint_ext(v):
        Atv = A.T @ v
        return np.concatenate([Atv, -Atv])

    trace = []
    notes = []
    converged = False
    it = 0
    while it < config.max_iter:
        rp = b - apply_ext(x)
        rd = c - adjoint_ext(y) - z
        obj = float(c @ x)
        gap = obj - float(b @ y)
        trace.append(TraceEntry(it, obj, float(np.linalg.norm(rp)),
                                support_size(x[:n] - x[n:])))
        if (np.linalg.norm(rp) <= _FEAS_TOL * b_scale
                and np.linalg.norm(rd) <= _FEAS_TOL * c_scale
                and gap <= gap_tol * (1.0 + abs(obj))):
            converged = True
            break
        it += 1
        mu_hat = _SIGMA * mu
        rc = mu_hat - x * z
        w = x / z
        # [A,-A] folds onto one d x d block; structured dictionaries
        # supply the weighted row Gram without materializing columns
        wsum = w[:n] + w[n:]
        if hasattr(A, "weighted_gram_dd"):
            M = A.weighted_gram_dd(wsum)
        else:
            M = (A * wsum) @ A.T
        try:
            dx, dy, dz = _eliminate(x, z, rp, rd, rc, apply_ext, adjoint_ext, M)
        except IllConditionedError:
            notes.append("stopped on ill-conditioned normal matrix")
            break
        if not (np.all(np.isfinite(dx)) and np.all(np.isfinite(dy))
                and np.all(np.isfinite(dz))):
            notes.append("stopped on non-finite step")
            break
        alpha_p = _step_to_boundary(x, dx)
        alpha_d = _step_to_boundary(z, dz)
        # keep the duality measure monotone: halve until it drops
        for _ in range(40):
            x_new = x + alpha_p * dx
            z_new = z + alpha_d * dz
            mu_new = float(x_new @ z_new) / two_n
            if mu_new < mu:
                break
            alpha_p *= 0.5
            alpha_d *= 0.5
        else:
            notes.append("stopped on stalled duality measure")
            break
        x = x_new
        y = y + alpha_d * dy
        z = z_new
        mu = mu_new
        if observer is not None:
            observer(PdipaState(x.copy(), y.copy(), z.copy(), mu))

    return SolverResult(x[:n] - x[n:], it, time.perf_counter() - t0,
                        converged, trace, notes=tuple(notes))
