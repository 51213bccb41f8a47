"""Solution-path solver for the lambda-parameterized l1 problem.

Follows the piecewise-linear path of minimizers of
    F(x) = 1/2 ||b - A x||^2 + lambda ||x||_1
from lambda = ||A^T b||_inf down to a target value (0 reaches the
equality-constrained solution on recoverable instances). The active-set
Gram factor is maintained by rank-1 Cholesky updates, so each breakpoint
costs O(d^2 + d n).
"""

import csv
import time
from dataclasses import dataclass

import numpy as np

from ell1 import numerics
from ell1.exceptions import DegenerateSupportError, NotPositiveDefiniteError
from ell1.model import SolverResult, TraceEntry, support_size
from ell1.operators import DenseDictionary

_TIE = 1e-12          # gamma tie window: removal wins inside it
_MIN_STEP_REL = 1e-10  # guards against zero-length re-add cycles


@dataclass
class PathState:
    """Snapshot of the path at one breakpoint."""

    x: np.ndarray
    support: list
    lam: float
    c: np.ndarray
    chol: numerics.CholFactor


def _as_dictionary(A):
    return A if hasattr(A, "adjoint") else DenseDictionary(A)


def _solve_direction(chol, D, support, sgn):
    """Direction on the support: (D_I^T D_I) d = sgn. Falls back to a dense
    refactorization when the maintained factor has drifted; raises
    DegenerateSupportError when the Gram stays singular."""
    if not support:
        return np.zeros(0), chol
    d_I = chol.solve(sgn)
    v = D.apply_columns(support, d_I)
    gram_d = D.columns_dot(support, v)
    tol = 1e-6 * max(1.0, float(np.linalg.norm(sgn)))
    if np.linalg.norm(gram_d - sgn) <= tol:
        return d_I, chol
    # drifted or singular: dense refactorization
    G = np.empty((len(support), len(support)))
    for col, j in enumerate(support):
        G[:, col] = D.gram_column(support, j)
    try:
        fresh = numerics.chol_factor(G)
    except NotPositiveDefiniteError as exc:
        raise DegenerateSupportError("active-set Gram is singular") from exc
    d_I = fresh.solve(sgn)
    if np.linalg.norm(G @ d_I - sgn) > tol:
        raise DegenerateSupportError("active-set Gram solve failed")
    return d_I, fresh


def update_direction(state, A):
    """Full-length path direction: solves the active-set system on the
    support of the state, zero elsewhere."""
    D = _as_dictionary(A)
    sgn = np.sign(state.c[state.support])
    d_I, _ = _solve_direction(state.chol, D, list(state.support), sgn)
    d = np.zeros(state.x.shape[0])
    d[state.support] = d_I
    return d


def _gammas(lam, c, x, d, w, support_mask):
    """Step lengths to the next add event (off support: |c - gamma w| hits
    lambda - gamma) and remove event (on support: x + gamma d crosses 0)."""
    off = ~support_mask
    gamma_plus, i_plus = np.inf, -1
    if np.any(off):
        idx = np.nonzero(off)[0]
        co, wo = c[idx], w[idx]
        with np.errstate(divide="ignore", invalid="ignore"):
            r1 = (lam - co) / (1.0 - wo)
            r2 = (lam + co) / (1.0 + wo)
        floor = _MIN_STEP_REL * max(lam, 1e-30)
        for ratios in (r1, r2):
            ok = np.isfinite(ratios) & (ratios > floor)
            if np.any(ok):
                j = int(np.argmin(np.where(ok, ratios, np.inf)))
                if ratios[j] < gamma_plus:
                    gamma_plus, i_plus = float(ratios[j]), int(idx[j])
    gamma_minus, i_minus = np.inf, -1
    sup = np.nonzero(support_mask)[0]
    if sup.size:
        with np.errstate(divide="ignore", invalid="ignore"):
            r = -x[sup] / d[sup]
        ok = np.isfinite(r) & (r > 0)
        if np.any(ok):
            j = int(np.argmin(np.where(ok, r, np.inf)))
            gamma_minus, i_minus = float(r[j]), int(sup[j])
    return gamma_plus, i_plus, gamma_minus, i_minus


def breakpoint_gammas(state, d, A):
    """Public form of the step-length computation for a PathState."""
    D = _as_dictionary(A)
    v = D.apply_columns(state.support, d[state.support])
    w = D.adjoint(v)
    mask = np.zeros(state.c.shape[0], dtype=bool)
    mask[state.support] = True
    return _gammas(state.lam, state.c, state.x, d, w, mask)


def _ridge_factor(D, support, notes):
    G = np.empty((len(support), len(support)))
    for col, j in enumerate(support):
        G[:, col] = D.gram_column(support, j)
    G[np.diag_indices_from(G)] += 1e-12 * max(np.trace(G), 1.0)
    if "ridge-regularized gram" not in notes:
        notes.append("ridge-regularized gram")
    return numerics.chol_factor(G)


def solve_path(D, b, target_lambda, config, path_csv=None, observer=None):
    """Run the path on a dictionary operator down to target_lambda.

    Returns (SolverResult, reached_lambda). Each loop pass handles one
    breakpoint; budget exhaustion returns the best iterate unconverged.
    observer, when given, receives a PathState snapshot after every
    breakpoint.
    """
    if target_lambda < 0:
        raise ValueError("target lambda must be nonnegative")
    _, n = D.shape
    b = np.asarray(b, dtype=np.float64)
    t0 = time.perf_counter()
    notes = []
    x = np.zeros(n)
    c = D.adjoint(b)
    lam0 = float(np.max(np.abs(c))) if n else 0.0
    trace = []
    path_rows = []

    def record(it, lam, res_norm):
        obj = 0.5 * res_norm ** 2 + lam * float(np.sum(np.abs(x)))
        trace.append(TraceEntry(it, obj, res_norm, support_size(x)))
        path_rows.append((lam, support_size(x), obj))

    def snapshot(lam):
        if observer is not None:
            observer(PathState(x.copy(), list(support), lam, c.copy(),
                               chol.copy()))

    def residual():
        return b - D.apply_columns(support, x[support])

    if lam0 <= target_lambda or lam0 == 0.0:
        # zero is already optimal at the target
        record(0, max(lam0, target_lambda), float(np.linalg.norm(b)))
        result = SolverResult(x, 0, time.perf_counter() - t0, True, trace)
        _dump_path(path_csv, path_rows)
        return result, max(lam0, target_lambda)

    lam = lam0
    j0 = int(np.argmax(np.abs(c)))
    support = [j0]
    chol = numerics.chol_append(numerics.CholFactor(np.zeros((0, 0))),
                                np.zeros(0), float(D.gram_column([j0], j0)[0]))
    mask = np.zeros(n, dtype=bool)
    mask[j0] = True
    converged = False
    it = 0
    finish_floor = max(target_lambda, 1e-12 * lam0)

    while it < config.max_iter:
        it += 1
        sgn = np.sign(c[support])
        try:
            d_I, chol = _solve_direction(chol, D, support, sgn)
        except DegenerateSupportError:
            chol = _ridge_factor(D, support, notes)
            d_I = chol.solve(sgn)
        v = D.apply_columns(support, d_I)
        w = D.adjoint(v)
        dfull = np.zeros(n)
        dfull[support] = d_I
        g_plus, i_plus, g_minus, i_minus = _gammas(lam, c, x, dfull, w, mask)
        g_event = min(g_plus, g_minus)
        cap = lam - target_lambda

        if cap <= g_event:
            x[support] += cap * d_I
            lam = target_lambda
            r = residual()
            c = D.adjoint(r)
            record(it, lam, float(np.linalg.norm(r)))
            snapshot(lam)
            converged = True
            break

        remove = g_minus <= g_plus + _TIE  # tie goes to removal
        gamma = g_minus if remove else g_plus
        x[support] += gamma * d_I
        if remove:
            pos = support.index(i_minus)
            x[i_minus] = 0.0
            support.pop(pos)
            mask[i_minus] = False
            chol = numerics.chol_delete(chol, pos)
        else:
            gcol = D.gram_column(support, i_plus)
            diag = float(D.gram_column([i_plus], i_plus)[0])
            try:
                chol = numerics.chol_append(chol, gcol, diag)
                support.append(i_plus)
            except NotPositiveDefiniteError:
                support.append(i_plus)
                chol = _ridge_factor(D, support, notes)
            mask[i_plus] = True
        # fresh correlations each breakpoint: O(dn), same class as the step
        r = residual()
        c = D.adjoint(r)
        lam_step = lam - gamma
        lam_emp = float(np.max(np.abs(c)))
        # derived lambda must match the correlation max; repair any drift
        # (with an empty support the max sits strictly below the path value)
        if abs(lam_emp - lam_step) <= 1e-9 * max(lam_step, 1e-30) or not support:
            lam = lam_step
        else:
            lam = lam_emp
        record(it, lam, float(np.linalg.norm(r)))
        snapshot(lam)
        if lam <= finish_floor:
            converged = True
            break

    result = SolverResult(x, it, time.perf_counter() - t0, converged, trace,
                          notes=tuple(notes))
    _dump_path(path_csv, path_rows)
    return result, lam


def _dump_path(path_csv, rows):
    if path_csv is None:
        return
    with open(path_csv, "w", newline="", encoding="utf-8") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(["lambda", "support_size", "objective"])
        for lam, size, obj in rows:
            wr.writerow(["%.17g" % lam, size, "%.17g" % obj])


def homotopy_solve(P, target_lambda, config, path_csv=None, observer=None):
    """Path solver on a dense instance down to target_lambda."""
    result, _ = solve_path(DenseDictionary(P.A), P.b, target_lambda, config,
                           path_csv=path_csv, observer=observer)
    return result
