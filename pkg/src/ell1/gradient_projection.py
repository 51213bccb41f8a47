"""Gradient projection and log-barrier solvers on bound-constrained forms.

gpsr_solve rewrites the penalized least-squares objective over the
nonnegative split z = [positive part; negative part], then runs projected
steepest descent with the exact single-variable step and a halving
backtrack. tnipm_solve instead follows the central path of the constrained
form |x_i| <= u_i, taking damped Newton steps whose reduced linear systems
are solved inexactly by diagonally preconditioned conjugate gradients.
"""

import time
from dataclasses import dataclass

import numpy as np

from ell1.exceptions import NumericalBreakdownError
from ell1.model import (SolverResult, StopRecord, TraceEntry,
                        kkt_from_correlation, stop_wanted, support_size)
from ell1.numerics import pcg_solve

_ALPHA_CAP = 1e8
_CURV_FLOOR = 1e-14    # relative curvature below this counts as flat
_MAX_HALVINGS = 50
_ARMIJO = 0.01
_REFRESH_EVERY = 64    # full residual recompute cadence (drift control)
_TRUNCATE_REL = 1e-7   # barrier haze threshold relative to ||x||_inf


@dataclass
class SplitIterate:
    """Nonnegative split z = [x_plus; x_minus] of length 2n."""

    z: np.ndarray

    def __post_init__(self):
        self.z = np.ascontiguousarray(self.z, dtype=np.float64)
        if self.z.ndim != 1 or self.z.shape[0] % 2:
            raise ValueError("z must be a vector of even length 2n")
        if np.any(self.z < 0):
            raise ValueError("split iterate must be componentwise nonnegative")

    @property
    def n(self):
        return self.z.shape[0] // 2

    def recombined(self):
        """The signed vector x = z_plus - z_minus."""
        return self.z[:self.n] - self.z[self.n:]


@dataclass
class BarrierIterate:
    """Interior point (x, u, t) with |x_i| < u_i strictly and t > 0."""

    x: np.ndarray
    u: np.ndarray
    t: float

    def __post_init__(self):
        self.x = np.ascontiguousarray(self.x, dtype=np.float64)
        self.u = np.ascontiguousarray(self.u, dtype=np.float64)
        if self.x.shape != self.u.shape or self.x.ndim != 1:
            raise ValueError("x and u must be vectors of equal length")
        if not np.all(np.abs(self.x) < self.u):
            raise ValueError("barrier iterate must satisfy |x_i| < u_i")
        if not self.t > 0:
            raise ValueError("t must be positive")


def _split_vector(z):
    if isinstance(z, SplitIterate):
        return z.z
    z = np.ascontiguousarray(z, dtype=np.float64)
    if z.ndim != 1 or z.shape[0] % 2:
        raise ValueError("z must be a vector of even length 2n")
    return z


def gpsr_direction(z, grad):
    """Masked gradient used as the projected descent direction.

    A component that sits on its bound (z_i = 0) keeps its gradient entry
    only when that entry is negative; moving against a nonnegative entry
    would leave the feasible set, so it is zeroed instead.
    """
    zv = _split_vector(z)
    g = np.ascontiguousarray(grad, dtype=np.float64)
    if g.shape != zv.shape:
        raise ValueError("z and grad must have equal length")
    return np.where((zv > 0.0) | (g < 0.0), g, 0.0)


def gpsr_step_size(g, A):
    """Exact minimizer of the split quadratic along -g, capped when flat.

    The split Hessian is never formed. With g = [g_plus; g_minus] its
    quadratic form collapses to ||A (g_plus - g_minus)||^2, one matvec.
    Curvature at or below 1e-14 relative to ||g||^2 returns the cap 1e8.
    """
    g = np.ascontiguousarray(g, dtype=np.float64)
    if g.ndim != 1 or g.shape[0] % 2:
        raise ValueError("g must be a vector of even length 2n")
    gg = float(g @ g)
    if gg == 0.0:
        raise ValueError("g must be nonzero")
    n = g.shape[0] // 2
    Av = A @ (g[:n] - g[n:])
    curvature = float(Av @ Av)
    if curvature <= _CURV_FLOOR * gg:
        return _ALPHA_CAP
    return gg / curvature


def gpsr_solve(P, lam, config, observer=None):
    """Projected steepest descent on the nonnegative split.

    Each iteration steps along the masked negative gradient with the
    exact 1-D step size, projects onto z >= 0, and halves the step up to
    50 times until the split objective decreases. lam=None resolves the
    default weight from config. observer, when given, receives the
    SplitIterate after every accepted step. Honors config.stopping.
    """
    A, b = P.A, P.b
    n = P.n
    if lam is None:
        lam = config.resolved_lambda(P)
    if not lam > 0:
        raise ValueError("lambda must be positive")
    t0 = time.perf_counter()
    if float(np.max(np.abs(A.T @ b))) == 0.0:
        return SolverResult(np.zeros(n), 0, time.perf_counter() - t0, True,
                            [TraceEntry(0, 0.0, float(np.linalg.norm(b)), 0)])

    z = np.zeros(2 * n)
    x = np.zeros(n)
    r = -b.copy()          # A x - b
    grad_x = A.T @ r
    trace = [TraceEntry(0, 0.5 * float(b @ b), float(np.linalg.norm(b)), 0)]
    notes = []
    history = []
    it = 0
    converged = False
    while it < config.max_iter:
        kkt = kkt_from_correlation(x, -grad_x, lam)
        if kkt <= config.tol * lam:
            converged = True
            break
        grad = np.concatenate([grad_x + lam, lam - grad_x])
        g = np.where((z > 0.0) | (grad < 0.0), grad, 0.0)
        if float(g @ g) == 0.0:
            # first-order point of the split program; kkt said otherwise
            notes.append("zero projected gradient before kkt tolerance")
            break
        alpha = gpsr_step_size(g, A)
        accepted = False
        for _ in range(_MAX_HALVINGS + 1):
            cand = np.maximum(z - alpha * g, 0.0)
            x_cand = cand[:n] - cand[n:]
            Adx = A @ (x_cand - x)
            # exact quadratic difference: trustworthy sign at tiny steps
            dQ = (float(grad @ (cand - z)) + 0.5 * float(Adx @ Adx))
            if dQ < 0.0:
                accepted = True
                break
            alpha *= 0.5
        if not accepted:
            notes.append("projection backtracking stalled")
            converged = kkt <= config.tol * lam
            break
        it += 1
        z, x = cand, x_cand
        if it % _REFRESH_EVERY == 0:
            r = A @ x - b
        else:
            r = r + Adx
        grad_x = A.T @ r
        F_cur = 0.5 * float(r @ r) + lam * float(np.sum(np.abs(x)))
        trace.append(TraceEntry(it, F_cur, float(np.linalg.norm(r)),
                                support_size(x)))
        if observer is not None:
            observer(SplitIterate(z.copy()))
        if config.stopping is not None:
            kkt = kkt_from_correlation(x, -grad_x, lam)
            history.append(StopRecord(x.copy(), F_cur, kkt))
            history = history[-2:]
            if stop_wanted(config, history, P):
                return SolverResult(x, it, time.perf_counter() - t0, True,
                                    trace, notes=tuple(notes))
    if not converged:
        converged = kkt_from_correlation(x, -grad_x, lam) <= config.tol * lam
    return SolverResult(x, it, time.perf_counter() - t0, converged, trace,
                        notes=tuple(notes))


def _truncate_small(x):
    """Snap barrier haze to exact zeros.

    The log barrier keeps every coordinate slightly away from zero;
    entries at or below 1e-7 of the largest magnitude are artifacts of
    that, not support.
    """
    out = x.copy()
    top = float(np.max(np.abs(out))) if out.size else 0.0
    if top > 0.0:
        out[np.abs(out) <= _TRUNCATE_REL * top] = 0.0
    return out


def _barrier_value(t, lam, r, x, u):
    up = u + x
    um = u - x
    if float(np.min(up)) <= 0.0 or float(np.min(um)) <= 0.0:
        return np.inf
    return (t * (0.5 * float(r @ r) + lam * float(np.sum(u)))
            - float(np.sum(np.log(up))) - float(np.sum(np.log(um))))


def tnipm_solve(P, lam, config, observer=None):
    """Truncated-Newton log-barrier solve of the |x_i| <= u_i form.

    Newton steps on the weighted barrier objective eliminate the bound
    block exactly, leaving an n-by-n positive definite system solved by
    conjugate gradients with the diagonal of the reduced Hessian as
    preconditioner. The barrier weight starts at 1/lambda and grows
    tenfold whenever the Newton decrement certifies the current center;
    iteration stops when the gap estimate 2n/t is below tol relative to
    the objective and the truncated iterate meets the kkt tolerance.
    Backtracking that cannot find a decreasing interior step raises
    NumericalBreakdownError. Options: pcg_tol (1e-4), pcg_max_iter
    (dimension default). observer receives the BarrierIterate after
    every accepted step. Honors config.stopping.
    """
    A, b = P.A, P.b
    n = P.n
    if lam is None:
        lam = config.resolved_lambda(P)
    if not lam > 0:
        raise ValueError("lambda must be positive")
    t0 = time.perf_counter()
    if float(np.max(np.abs(A.T @ b))) == 0.0:
        return SolverResult(np.zeros(n), 0, time.perf_counter() - t0, True,
                            [TraceEntry(0, 0.0, float(np.linalg.norm(b)), 0)])

    pcg_tol = config.opt("pcg_tol", 1e-4)
    pcg_cap = config.opt("pcg_max_iter", None)
    col_sq = np.sum(A * A, axis=0)
    x = np.zeros(n)
    u = np.ones(n)
    t = 1.0 / lam
    trace = []
    notes = []
    history = []
    it = 0
    converged = False
    pcg_capped = 0
    while it < config.max_iter:
        r = A @ x - b
        Ar = A.T @ r
        obj = 0.5 * float(r @ r) + lam * float(np.sum(np.abs(x)))
        trace.append(TraceEntry(it, obj, float(np.linalg.norm(r)),
                                support_size(_truncate_small(x))))
        if config.stopping is not None:
            kkt_now = kkt_from_correlation(x, -Ar, lam)
            history.append(StopRecord(x.copy(), obj, kkt_now))
            history = history[-2:]
            if stop_wanted(config, history, P):
                converged = True
                x = _truncate_small(x)
                break
        if 2.0 * n / t <= config.tol * (1.0 + obj):
            xt = _truncate_small(x)
            ct = A.T @ (b - A @ xt)
            if kkt_from_correlation(xt, ct, lam) <= config.tol * lam:
                converged = True
                x = xt
                break
        up = u + x
        um = u - x
        p = 1.0 / up
        q = 1.0 / um
        g_x = t * Ar + (q - p)
        g_u = t * lam - p - q
        pp = p * p
        qq = q * q
        diag_sum = pp + qq
        diag_diff = pp - qq
        d_red = 4.0 * pp * qq / diag_sum
        rhs = -g_x + diag_diff * (g_u / diag_sum)
        op = lambda v: t * (A.T @ (A @ v)) + d_red * v
        sol = pcg_solve(op, rhs, precond=t * col_sq + d_red,
                        tol=pcg_tol, max_iter=pcg_cap)
        if not sol.converged:
            pcg_capped += 1
        dx = sol.x
        du = -(g_u + diag_diff * dx) / diag_sum
        decrement_sq = -(float(g_x @ dx) + float(g_u @ du))
        # largest step keeping the iterate strictly interior
        s = 1.0
        dup = du + dx
        dum = du - dx
        shrinking = dup < 0.0
        if np.any(shrinking):
            s = min(s, 0.99 * float(np.min(up[shrinking] / -dup[shrinking])))
        shrinking = dum < 0.0
        if np.any(shrinking):
            s = min(s, 0.99 * float(np.min(um[shrinking] / -dum[shrinking])))
        F_t = _barrier_value(t, lam, r, x, u)
        Adx = A @ dx
        accepted = False
        for _ in range(_MAX_HALVINGS + 1):
            F_new = _barrier_value(t, lam, r + s * Adx, x + s * dx,
                                   u + s * du)
            if F_new <= F_t - _ARMIJO * s * decrement_sq:
                accepted = True
                break
            s *= 0.5
        if not accepted:
            raise NumericalBreakdownError(
                "barrier line search exhausted without an interior "
                "decrease")
        x = x + s * dx
        u = u + s * du
        it += 1
        if observer is not None:
            observer(BarrierIterate(x.copy(), u.copy(), t))
        if decrement_sq <= 0.25:
            t *= 10.0
    x = _truncate_small(x)
    if not converged:
        rt = A @ x - b
        objt = 0.5 * float(rt @ rt) + lam * float(np.sum(np.abs(x)))
        if (2.0 * n / t <= config.tol * (1.0 + objt)
                and kkt_from_correlation(x, A.T @ -rt, lam)
                <= config.tol * lam):
            converged = True
    if pcg_capped:
        notes.append("pcg hit its iteration cap %d times" % pcg_capped)
    return SolverResult(x, it, time.perf_counter() - t0, converged, trace,
                        notes=tuple(notes))
