"""Tests for the interior-point solver."""

import numpy as np
import pytest

from ell1 import homotopy, pdipa, synth
from ell1.exceptions import IllConditionedError
from ell1.model import ProblemInstance, SolverConfig
from ell1.pdipa import PdipaState, newton_kkt_step, pdipa_solve


def dense_kkt_solve(A_ext, b, st, mu_hat, c=None):
    """Oracle: assemble and solve the full three-block Newton system."""
    m = st.x.shape[0]
    d = A_ext.shape[0]
    if c is None:
        c = np.ones(m)
    K = np.zeros((2 * m + d, 2 * m + d))
    K[:d, :m] = A_ext
    K[d:d + m, m:m + d] = A_ext.T
    K[d:d + m, m + d:] = np.eye(m)
    K[d + m:, :m] = np.diag(st.z)
    K[d + m:, m + d:] = np.diag(st.x)
    rhs = np.concatenate([b - A_ext @ st.x, c - A_ext.T @ st.y - st.z,
                          mu_hat - st.x * st.z])
    sol = np.linalg.solve(K, rhs)
    return sol[:m], sol[m:m + d], sol[m + d:]


# --- newton_kkt_step -------------------------------------------------------


def test_step_already_centered_is_zero():
    # primal and dual feasible with uniform x*z: every residual vanishes
    A_ext = np.array([[1.0, -1.0]])
    st = PdipaState(np.array([1.5, 0.5]), np.array([0.5]),
                    np.array([0.5, 1.5]), 0.75)
    dx, dy, dz = newton_kkt_step(st, A_ext, np.array([1.0]), 0.75)
    assert np.max(np.abs(dx)) <= 1e-14
    assert np.max(np.abs(dy)) <= 1e-14
    assert np.max(np.abs(dz)) <= 1e-14
    # complementarity row closes exactly
    assert np.max(np.abs(st.z * dx + st.x * dz)) <= 1e-14


def test_step_matches_dense_kkt_oracle_1d():
    A_ext = np.array([[1.0, -1.0]])
    b = np.array([1.0])
    st = PdipaState(np.array([1.0, 2.0]), np.array([0.3]),
                    np.array([0.7, 1.2]), 0.0)
    dx, dy, dz = newton_kkt_step(st, A_ext, b, 0.05)
    assert dx == pytest.approx([-0.55769230769230793, -2.5576923076923075],
                               rel=1e-10)
    assert dy == pytest.approx([0.25961538461538436], rel=1e-10)
    assert dz == pytest.approx([-0.25961538461538436, 0.35961538461538445],
                               rel=1e-10)
    odx, ody, odz = dense_kkt_solve(A_ext, b, st, 0.05)
    assert np.allclose(dx, odx, atol=1e-12)
    assert np.allclose(dy, ody, atol=1e-12)
    assert np.allclose(dz, odz, atol=1e-12)


def test_step_matches_dense_kkt_oracle_random():
    rng = np.random.default_rng(42)
    for _ in range(20):
        d, m = 4, 12
        A_ext = rng.standard_normal((d, m))
        b = rng.standard_normal(d)
        st = PdipaState(rng.uniform(0.1, 3.0, m), rng.standard_normal(d),
                        rng.uniform(0.1, 3.0, m), 0.0)
        mu_hat = float(rng.uniform(0.01, 0.5))
        got = newton_kkt_step(st, A_ext, b, mu_hat)
        want = dense_kkt_solve(A_ext, b, st, mu_hat)
        for g, w in zip(got, want):
            assert np.allclose(g, w, rtol=1e-8, atol=1e-10)


def test_step_restores_primal_feasibility():
    # infeasible start: the step must close the equality residual exactly
    rng = np.random.default_rng(5)
    A_ext = rng.standard_normal((3, 10))
    b = rng.standard_normal(3)
    st = PdipaState(np.full(10, 2.0), np.zeros(3), np.full(10, 0.5), 0.0)
    dx, _, _ = newton_kkt_step(st, A_ext, b, 0.1)
    rp = b - A_ext @ st.x
    assert np.linalg.norm(A_ext @ dx - rp) <= 1e-10 * max(1.0, np.linalg.norm(rp))


def test_step_singular_system_raises():
    A_ext = np.array([[0.0, 0.0]])
    st = PdipaState(np.array([1.0, 1.0]), np.zeros(1), np.array([1.0, 1.0]), 0.0)
    with pytest.raises(IllConditionedError):
        newton_kkt_step(st, A_ext, np.array([1.0]), 0.1)


# --- pdipa_solve -----------------------------------------------------------


def test_solve_lp_vertex():
    # vertices of {x1 + 2 x2 = 2}: [2,0] costs 2, [0,1] costs 1
    P = ProblemInstance(np.array([[1.0, 2.0]]), np.array([2.0]))
    r = pdipa_solve(P, SolverConfig())
    assert r.converged
    assert np.allclose(r.x_star, [0.0, 1.0], atol=1e-5)
    assert np.sum(np.abs(r.x_star)) == pytest.approx(1.0, abs=1e-5)


def test_solve_one_dimensional():
    P = ProblemInstance(np.array([[1.0]]), np.array([1.0]))
    r = pdipa_solve(P, SolverConfig())
    assert r.converged
    assert r.x_star[0] == pytest.approx(1.0, abs=1e-8)


def test_solve_zero_rhs():
    P = ProblemInstance(np.eye(3), np.zeros(3))
    r = pdipa_solve(P, SolverConfig())
    assert r.converged and r.iterations == 0
    assert np.all(r.x_star == 0.0)


def test_solve_recovers_sparse_signal():
    rng = np.random.default_rng(11)
    A = rng.standard_normal((50, 100))
    A /= np.linalg.norm(A, axis=0)
    x0 = np.zeros(100)
    x0[rng.choice(100, 5, replace=False)] = rng.standard_normal(5)
    r = pdipa_solve(ProblemInstance(A, A @ x0), SolverConfig())
    assert r.converged
    assert np.linalg.norm(r.x_star - x0) <= 1e-6 * np.linalg.norm(x0)
    # path solver agrees on the same instance, certifying uniqueness
    h = homotopy.homotopy_solve(ProblemInstance(A, A @ x0), 0.0, SolverConfig())
    assert np.linalg.norm(r.x_star - h.x_star) <= 1e-6 * np.linalg.norm(h.x_star)


def test_solve_iteration_cap_returns_best():
    P = ProblemInstance(np.array([[1.0, 2.0]]), np.array([2.0]))
    r = pdipa_solve(P, SolverConfig(max_iter=2))
    assert not r.converged and r.iterations == 2
    assert r.x_star.shape == (2,)


def test_solve_trace_reports_objective_and_residual():
    P = ProblemInstance(np.array([[1.0, 2.0]]), np.array([2.0]))
    r = pdipa_solve(P, SolverConfig())
    assert len(r.trace) == r.iterations + 1
    assert r.trace[-1].residual_norm <= 1e-8 * 2.0


# --- invariants ------------------------------------------------------------


def run_observed(seed):
    spec = synth.GenSpec(n=40, d=20, k=1 + seed % 5, seed=seed)
    P = synth.make_instance(spec)
    states = []
    r = pdipa_solve(P, SolverConfig(), observer=states.append)
    return P, r, states


@pytest.mark.invariant
def test_invariant_duality_measure_strictly_decreasing():
    for seed in range(900, 1010):
        _, r, states = run_observed(seed)
        mus = [st.mu for st in states]
        assert all(a > b for a, b in zip(mus, mus[1:]))


@pytest.mark.invariant
def test_invariant_iterates_strictly_interior():
    for seed in range(900, 1010):
        _, _, states = run_observed(seed)
        for st in states:
            assert np.min(st.x) > 0.0
            assert np.min(st.z) > 0.0


@pytest.mark.invariant
def test_invariant_termination_certificates():
    for seed in range(900, 1010):
        P, r, states = run_observed(seed)
        assert r.converged
        st = states[-1]
        n = P.A.shape[1]
        rp = P.b - P.A @ (st.x[:n] - st.x[n:])
        assert np.linalg.norm(rp) <= 1e-8 * max(1.0, np.linalg.norm(P.b))
        obj = float(np.sum(st.x))
        gap = obj - float(P.b @ st.y)
        assert gap <= 1e-6 * (1.0 + abs(obj))
