import time

import numpy as np
import pytest
import scipy.linalg
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import lp_by_vertices, qp_by_enumeration
from vkdpc.optim import (
    INFEASIBLE,
    OPTIMAL,
    UNBOUNDED,
    QpProblem,
    RiccatiError,
    kkt_residual,
    lqr_gain,
    min_norm_lstsq,
    riccati_residual,
    solve_dare,
    solve_lp,
    solve_qp,
)


def random_qp(rng, n=None, m=None):
    n = n or int(rng.integers(1, 7))
    m = m or int(rng.integers(1, 9))
    L = rng.normal(size=(n, n))
    H = L @ L.T + 0.1 * np.eye(n)
    f = rng.normal(size=n) * 3
    G = rng.normal(size=(m, n))
    # keep a known interior point so the QP is feasible
    v0 = rng.normal(size=n)
    h = G @ v0 + rng.uniform(0.1, 1.0, size=m)
    return H, f, G, h


def test_clipped_scalar():
    sol = solve_qp(QpProblem(np.eye(1), [-1.0], [[1.0]], [0.5]))
    assert sol.status == OPTIMAL
    assert sol.v_star[0] == pytest.approx(0.5, abs=1e-10)


def test_equality_symmetry():
    sol = solve_qp(QpProblem(np.eye(2), np.zeros(2), A_eq=[[1.0, 1.0]], b_eq=[1.0]))
    assert sol.ok
    np.testing.assert_allclose(sol.v_star, [0.5, 0.5], atol=1e-10)


def test_unconstrained_is_linear_solve(rng):
    H, f, _, _ = random_qp(rng, 5, 1)
    sol = solve_qp(QpProblem(H, f))
    np.testing.assert_allclose(sol.v_star, -np.linalg.solve(H, f), atol=1e-10)


def test_random_qps_match_enumeration():
    rng = np.random.default_rng(0)
    for _ in range(30):
        H, f, G, h = random_qp(rng)
        v_ref, val_ref = qp_by_enumeration(H, f, G, h)
        p = QpProblem(H, f, G, h)
        sol = solve_qp(p)
        assert sol.status == OPTIMAL
        assert sol.kkt_residual <= 1e-6
        assert p.objective(sol.v_star) == pytest.approx(val_ref, abs=1e-6)
        np.testing.assert_allclose(sol.v_star, v_ref, atol=1e-6)


def test_infeasible_reported_not_raised():
    sol = solve_qp(QpProblem(np.eye(1), [0.0], [[1.0], [-1.0]], [-1.0, -1.0]))
    assert sol.status == INFEASIBLE


def test_objective_includes_constant():
    p = QpProblem(np.eye(1), [0.0], const=3.5)
    assert p.objective(np.zeros(1)) == 3.5


def test_rejects_indefinite_hessian():
    with pytest.raises(ValueError):
        QpProblem(np.diag([1.0, -1.0]), np.zeros(2))


def test_rejects_mismatched_rhs():
    with pytest.raises(ValueError):
        QpProblem(np.eye(2), np.zeros(2), np.eye(2), np.zeros(3))


def test_deterministic_bitwise():
    rng = np.random.default_rng(4)
    H, f, G, h = random_qp(rng, 6, 8)
    a = solve_qp(QpProblem(H, f, G, h))
    b = solve_qp(QpProblem(H, f, G, h))
    assert np.array_equal(a.v_star, b.v_star)


def test_semidefinite_with_constraints():
    # H singular: the linear term pushes against a box
    H = np.diag([1.0, 0.0])
    sol = solve_qp(QpProblem(H, [0.0, -1.0], np.vstack([np.eye(2), -np.eye(2)]), np.ones(4)))
    assert sol.ok
    np.testing.assert_allclose(sol.v_star, [0.0, 1.0], atol=1e-8)


def test_kkt_residual_zero_at_solution():
    p = QpProblem(np.eye(1), [-1.0], [[1.0]], [0.5])
    assert kkt_residual(p, np.array([0.5]), np.array([0.5]), np.zeros(0)) <= 1e-15
    assert kkt_residual(p, np.array([0.7]), np.array([0.0]), np.zeros(0)) > 0.1


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 100_000))
def test_qp_kkt_property(seed):
    rng = np.random.default_rng(seed)
    H, f, G, h = random_qp(rng)
    sol = solve_qp(QpProblem(H, f, G, h), tol=1e-8)
    assert sol.ok and sol.kkt_residual <= 1e-8
    assert np.all(G @ sol.v_star <= h + 1e-8)


def test_lp_unit_box():
    box = np.vstack([np.eye(2), -np.eye(2)])
    sol = solve_lp([-1.0, 0.0], box, np.ones(4))
    assert sol.status == OPTIMAL and -sol.value == pytest.approx(1.0)


def test_lp_infeasible_and_unbounded():
    assert solve_lp([1.0], [[1.0], [-1.0]], [-1.0, -1.0]).status == INFEASIBLE
    assert solve_lp([-1.0], [[-1.0]], [0.0]).status == UNBOUNDED


def test_lp_vs_vertex_enumeration():
    rng = np.random.default_rng(1)
    for _ in range(20):
        n = int(rng.integers(2, 4))
        A = np.vstack([np.eye(n), -np.eye(n), rng.normal(size=(4, n))])
        b = np.concatenate([np.ones(2 * n) * 2, rng.uniform(0.5, 2.0, 4)])
        c = rng.normal(size=n)
        sol = solve_lp(c, A, b)
        assert sol.status == OPTIMAL
        assert sol.value == pytest.approx(lp_by_vertices(c, A, b), abs=1e-8)


def test_dare_scalar():
    P, K = solve_dare([[0.5]], [[1.0]], [[1.0]], [[1.0]])
    assert P[0, 0] == pytest.approx((0.25 + np.sqrt(4.0625)) / 2, rel=1e-12)
    assert P[0, 0] == pytest.approx(1.13278, abs=1e-5)
    assert K[0, 0] == pytest.approx(-0.26556, abs=1e-5)


def test_dare_zero_input_is_lyapunov():
    A = np.array([[0.5, 0.2], [0.0, 0.3]])
    Q = np.eye(2)
    P, K = solve_dare(A, np.zeros((2, 1)), Q, np.eye(1))
    np.testing.assert_allclose(A.T @ P @ A - P, -Q, atol=1e-12)
    np.testing.assert_allclose(K, 0.0, atol=1e-15)


def test_dare_zero_dynamics():
    Q = np.diag([2.0, 3.0])
    P, K = solve_dare(np.zeros((2, 2)), np.eye(2), Q, np.eye(2))
    np.testing.assert_allclose(P, Q, atol=1e-14)
    np.testing.assert_allclose(K, 0.0, atol=1e-14)


def test_dare_matches_scipy_oracle():
    rng = np.random.default_rng(2)
    for _ in range(20):
        n, m = int(rng.integers(1, 5)), int(rng.integers(1, 3))
        A = rng.normal(size=(n, n))
        B = rng.normal(size=(n, m))
        Q = np.eye(n) * rng.uniform(0.5, 5)
        R = np.eye(m) * rng.uniform(0.5, 5)
        P, K = solve_dare(A, B, Q, R)
        P_ref = scipy.linalg.solve_discrete_are(A, B, Q, R)
        np.testing.assert_allclose(P, P_ref, rtol=1e-8, atol=1e-9)
        assert np.abs(riccati_residual(A, B, Q, R, P)).max() <= 1e-10 * max(1, np.abs(P).max())
        np.testing.assert_allclose(K, lqr_gain(A, B, R, P))
        Acl = A + B @ K
        assert max(abs(np.linalg.eigvals(Acl))) < 1
        M = Acl.T @ P @ Acl - P + Q + K.T @ R @ K
        assert np.linalg.eigvalsh(M).max() <= 1e-8 * max(1, np.abs(P).max())


def test_dare_pendulum_velocity_pair(analytic_model):
    A, B, _ = analytic_model.matrices(np.array([0.0, 0.5]), np.array([2.35]))
    P, K = solve_dare(A, B, 1000 * np.eye(3), 10 * np.eye(1))
    P_ref = scipy.linalg.solve_discrete_are(A, B, 1000 * np.eye(3), 10 * np.eye(1))
    np.testing.assert_allclose(P, P_ref, rtol=1e-8)


def test_dare_unstabilisable_raises():
    with pytest.raises(RiccatiError):
        solve_dare([[2.0]], [[0.0]], [[1.0]], [[1.0]])


def test_lstsq_identity():
    Y = np.arange(6.0).reshape(2, 3)
    np.testing.assert_allclose(min_norm_lstsq(np.eye(3), Y).X, Y)


def test_lstsq_zero_row_gets_zero_coefficients(rng):
    M = rng.normal(size=(4, 10))
    M[2] = 0.0
    Y = rng.normal(size=(2, 10))
    res = min_norm_lstsq(M, Y)
    np.testing.assert_array_equal(res.X[:, 2], 0.0)
    assert res.rank == 3 and not res.full_rank


def test_lstsq_consistent_fat_system(rng):
    M = rng.normal(size=(30, 12))
    X0 = rng.normal(size=(3, 30))
    res = min_norm_lstsq(M, X0 @ M)
    assert np.linalg.norm(res.X @ M - X0 @ M) <= 1e-10


def test_lstsq_min_norm_against_pinv(rng):
    M = rng.normal(size=(8, 5)) @ rng.normal(size=(5, 20))  # rank 5
    Y = rng.normal(size=(2, 20))
    res = min_norm_lstsq(M, Y)
    np.testing.assert_allclose(res.X, Y @ np.linalg.pinv(M), atol=1e-10)
    assert res.rank == 5
    Mp = min_norm_lstsq(M, np.eye(20)).X
    np.testing.assert_allclose(M @ Mp @ M, M, atol=1e-10)
    np.testing.assert_allclose(Mp @ M @ Mp, Mp, atol=1e-10)


def test_lstsq_optimality_under_perturbation(rng):
    M = rng.normal(size=(6, 15))
    Y = rng.normal(size=(2, 15))
    X = min_norm_lstsq(M, Y).X
    base = np.linalg.norm(X @ M - Y)
    for _ in range(50):
        assert np.linalg.norm((X + 1e-3 * rng.normal(size=X.shape)) @ M - Y) >= base


def test_lstsq_ridge_matches_closed_form(rng):
    M = rng.normal(size=(6, 15))
    Y = rng.normal(size=(2, 15))
    lam = 0.3
    X = min_norm_lstsq(M, Y, ridge=lam).X
    np.testing.assert_allclose(X, Y @ M.T @ np.linalg.inv(M @ M.T + lam * np.eye(6)), atol=1e-10)
    with pytest.raises(ValueError):
        min_norm_lstsq(M, Y, ridge=-1)


def test_qp_oracle_runtime():
    rng = np.random.default_rng(7)
    t0 = time.perf_counter()
    for _ in range(30):
        H, f, G, h = random_qp(rng)
        solve_qp(QpProblem(H, f, G, h))
    assert time.perf_counter() - t0 < 10
