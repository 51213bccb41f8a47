"""Multiplier-method solvers for equality-constrained l1 minimization.

Both solvers target min ||x||_1 subject to A x = b. palm_solve attacks the
primal with an outer multiplier loop whose inner subproblems are inexact
accelerated shrinkage solves under a geometrically growing penalty.
dalm_solve runs the three-step dual iteration (box projection, row-Gram
least squares, multiplier update) with A A^T factored once per problem.
Rule of thumb: the dual solver wins when d is much smaller than n, the
primal one when the dictionary is tall.
"""

import time
from dataclasses import dataclass

import numpy as np

from ell1.exceptions import IllConditionedError, NotPositiveDefiniteError
from ell1.model import (SolverResult, StopRecord, TraceEntry, stop_wanted,
                        support_size)
from ell1.numerics import (CholFactor, chol_factor, project_box_linf,
                           soft_threshold, spectral_norm_sq)

_INNER_CAP = 200       # inner shrinkage iterations per outer multiplier step
_Y_REFINE_TOL = 1e-10  # relative residual contract of the dual y-step


@dataclass
class AlmState:
    """Primal multiplier-loop state.

    tau is the penalty-free curvature bound (largest eigenvalue of A^T A,
    slightly inflated); the inner shrinkage step length is 1/tau and the
    penalty weight mu grows by the fixed factor rho every outer iteration.
    """

    x: np.ndarray
    y: np.ndarray
    mu: float
    rho: float
    tau: float

    def __post_init__(self):
        if not self.mu > 0 or not self.tau > 0:
            raise ValueError("mu and tau must be positive")
        if not self.rho > 1:
            raise ValueError("rho must exceed 1")


@dataclass
class DalmState:
    """Dual three-step iteration state.

    x doubles as the multiplier of the dual constraint z = A^T y and as
    the running primal estimate; z stays inside the unit l-inf ball by
    construction; gram_chol holds the once-computed factor of A A^T.
    """

    x: np.ndarray
    y: np.ndarray
    z: np.ndarray
    beta: float
    gram_chol: CholFactor

    def __post_init__(self):
        if not self.beta > 0:
            raise ValueError("beta must be positive")
        if float(np.max(np.abs(self.z))) > 1.0:
            raise ValueError("z must lie in the unit l-inf ball")


def _inner_shrinkage(A, x, b_eff, shrink, tau, tol_rel, cap):
    """Accelerated proximal descent on tau/2-scaled penalty least squares.

    Minimizes shrink*tau*||x||_1/tau ... concretely: the l1 weight of the
    subproblem is shrink*tau and the gradient step length 1/tau. Stops on
    relative iterate change <= tol_rel or after cap steps. Returns the new
    iterate and the number of steps taken (at least one).
    """
    t_prev = 1.0
    x_prev = x
    y_vec = x
    steps = 0
    for _ in range(cap):
        grad = A.T @ (A @ y_vec - b_eff)
        x_new = soft_threshold(y_vec - grad / tau, shrink)
        steps += 1
        t_new = 0.5 * (1.0 + np.sqrt(4.0 * t_prev * t_prev + 1.0))
        y_vec = x_new + ((t_prev - 1.0) / t_new) * (x_new - x_prev)
        change = float(np.linalg.norm(x_new - x_prev))
        x_prev, t_prev = x_new, t_new
        if change <= tol_rel * max(1.0, float(np.linalg.norm(x_new))):
            break
    return x_prev, steps


def palm_solve(P, config, observer=None):
    """Primal multiplier loop with inexact shrinkage inner solves.

    Every outer iteration minimizes the penalized Lagrangian in x (at
    most 200 accelerated shrinkage steps, inner tolerance 1e-2/mu), then
    takes the multiplier ascent step y <- y + mu (b - A x) and grows
    mu <- rho mu. Defaults mu0 = 1, rho = 2 (options "mu0", "rho").
    Converges when ||b - A x|| <= config.tol ||b||; iterations counts
    inner steps, and config.max_iter caps that total. observer, when
    given, receives the AlmState after every outer iteration. The
    stopping-rule kkt slot carries the relative primal residual.
    """
    A, b = P.A, P.b
    n = P.n
    t0 = time.perf_counter()
    b_norm = float(np.linalg.norm(b))
    if b_norm == 0.0:
        return SolverResult(np.zeros(n), 0, time.perf_counter() - t0, True,
                            [TraceEntry(0, 0.0, 0.0, 0)])
    mu = float(config.opt("mu0", 1.0))
    rho = float(config.opt("rho", 2.0))
    if not mu > 0 or not rho > 1:
        raise ValueError("mu0 must be positive and rho must exceed 1")
    if hasattr(A, "norm_sq"):
        tau = 1.01 * A.norm_sq()
    else:
        tau = 1.01 * spectral_norm_sq(A)
    x = np.zeros(n)
    y = np.zeros(P.d)
    trace = [TraceEntry(0, 0.0, b_norm, 0)]
    notes = []
    history = []
    it = 0
    converged = False
    while it < config.max_iter:
        # inner problem: mu/2 ||A x - (b + y/mu)||^2 + ||x||_1, scaled by
        # 1/mu so the gradient step keeps the 1/tau length
        b_eff = b + y / mu
        x, steps = _inner_shrinkage(A, x, b_eff, 1.0 / (mu * tau), tau,
                                    1e-2 / mu, min(_INNER_CAP,
                                                   config.max_iter - it))
        it += steps
        r = b - A @ x
        res_norm = float(np.linalg.norm(r))
        y = y + mu * r
        l1 = float(np.sum(np.abs(x)))
        trace.append(TraceEntry(it, l1, res_norm, support_size(x)))
        if observer is not None:
            observer(AlmState(x.copy(), y.copy(), mu, rho, tau))
        rel = res_norm / b_norm
        if rel <= config.tol:
            converged = True
            break
        if config.stopping is not None:
            history.append(StopRecord(x.copy(), l1, rel))
            history = history[-2:]
            if stop_wanted(config, history, P):
                converged = True
                break
        mu *= rho
    if not converged and it >= config.max_iter:
        notes.append("inner-iteration budget exhausted")
    return SolverResult(x, it, time.perf_counter() - t0, converged, trace,
                        notes=tuple(notes))


def _gram_factor(A):
    try:
        gram = A.gram_dd() if hasattr(A, "gram_dd") else A @ A.T
        return chol_factor(gram)
    except NotPositiveDefiniteError as exc:
        raise IllConditionedError(
            "row Gram A A^T is not positive definite; the dual solver "
            "needs full row rank") from exc


def dual_y_solve(state, A, z_next, b):
    """Least-squares multiplier step of the dual iteration.

    Solves beta A A^T y = beta A z_next - (A x - b) through the cached
    factor, with one refinement pass; the result is certified to relative
    residual 1e-10 or IllConditionedError is raised.
    """
    rhs = A @ z_next - (A @ state.x - b) / state.beta
    y = state.gram_chol.solve(rhs)
    resid = rhs - A @ (A.T @ y)
    scale = max(1.0, float(np.linalg.norm(rhs)))
    if float(np.linalg.norm(resid)) > _Y_REFINE_TOL * scale:
        y = y + state.gram_chol.solve(resid)
        resid = rhs - A @ (A.T @ y)
        if float(np.linalg.norm(resid)) > _Y_REFINE_TOL * scale:
            raise IllConditionedError(
                "dual least-squares step failed its residual contract")
    return y


def _y_cg_step(state, A, z_next, b):
    """Single conjugate-gradient step on the y system, warm started."""
    rhs = A @ z_next - (A @ state.x - b) / state.beta
    r = rhs - A @ (A.T @ state.y)
    rr = float(r @ r)
    if rr == 0.0:
        return state.y
    Ar = A @ (A.T @ r)
    curv = float(r @ Ar)
    if curv <= 0.0:
        raise IllConditionedError("row Gram lost positive definiteness")
    return state.y + (rr / curv) * r


def dalm_solve(P, config, observer=None):
    """Dual three-step iteration: project, least-squares, multiplier.

    Per iteration: z <- clamp(A^T y + x/beta) onto the unit l-inf ball,
    y from the row-Gram least-squares step, then x <- x - beta (z - A^T y).
    beta defaults to 1 (option "beta"); option "y_cg_step" replaces the
    exact y solve with one warm-started conjugate-gradient step.
    Converges when ||b - A x|| <= config.tol ||b|| and the duality gap
    against the box-scaled multiplier, ||x||_1 - b'y / max(1, ||A'y||_inf),
    is within config.tol of zero relative to max(1, ||x||_1); by weak
    duality that certifies the l1 value itself. observer, when given,
    receives (state, x_prev) after every iteration. The stopping-rule kkt
    slot carries the relative primal residual.
    """
    A, b = P.A, P.b
    n = P.n
    t0 = time.perf_counter()
    b_norm = float(np.linalg.norm(b))
    if b_norm == 0.0:
        return SolverResult(np.zeros(n), 0, time.perf_counter() - t0, True,
                            [TraceEntry(0, 0.0, 0.0, 0)])
    beta = float(config.opt("beta", 1.0))
    if not beta > 0:
        raise ValueError("beta must be positive")
    cg_mode = bool(config.opt("y_cg_step", False))
    gram = _gram_factor(A)
    state = DalmState(np.zeros(n), np.zeros(P.d), np.zeros(n), beta, gram)
    trace = [TraceEntry(0, 0.0, b_norm, 0)]
    notes = []
    history = []
    it = 0
    converged = False
    while it < config.max_iter:
        z = project_box_linf(A.T @ state.y + state.x / beta)
        if cg_mode:
            y = _y_cg_step(state, A, z, b)
        else:
            y = dual_y_solve(state, A, z, b)
        x_prev = state.x
        Aty = A.T @ y
        x = x_prev - beta * (z - Aty)
        state = DalmState(x, y, z, beta, gram)
        it += 1
        r = b - A @ x
        res_norm = float(np.linalg.norm(r))
        l1 = float(np.sum(np.abs(x)))
        trace.append(TraceEntry(it, l1, res_norm, support_size(x)))
        if observer is not None:
            observer(state, x_prev)
        rel = res_norm / b_norm
        # certified gap: y scaled into the dual box bounds the optimum
        # from below, so l1 minus the bound brackets the suboptimality
        scale = max(1.0, float(np.max(np.abs(Aty))))
        gap = l1 - float(b @ y) / scale
        if rel <= config.tol and gap <= config.tol * max(1.0, l1):
            converged = True
            break
        if config.stopping is not None:
            history.append(StopRecord(x.copy(), l1, rel))
            history = history[-2:]
            if stop_wanted(config, history, P):
                converged = True
                break
    if not converged and it >= config.max_iter:
        notes.append("iteration budget exhausted")
    return SolverResult(state.x, it, time.perf_counter() - t0, converged,
                        trace, notes=tuple(notes))
