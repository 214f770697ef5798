import math

import numpy as np
import pytest
import scipy.sparse as sps
from hypothesis import given
from hypothesis import strategies as st

from conftest import random_sparse, random_spd
from expres.linalg import (CsrMatrix, DivergenceError, MatvecCounter, NonConvergenceError,
                           SingularMatrixError, expm_dense, gmres, lu_solve_tridiagonal,
                           phi_chain, sparse_lu, spmv, ssor_preconditioner)
from expres.problems import conv_diff_2d, tridiag


def taylor_expm(X, terms=30):
    out = np.eye(X.shape[0])
    term = np.eye(X.shape[0])
    for j in range(1, terms):
        term = term @ X / j
        out = out + term
    return out


# ---- CsrMatrix / spmv ---------------------------------------------------
def test_csr_rejects_bad_structure():
    with pytest.raises(ValueError):
        CsrMatrix(2, [0, 1, 1], [3], [1.0])          # column out of range
    with pytest.raises(ValueError):
        CsrMatrix(2, [0, 2, 2], [1, 0], [1.0, 1.0])  # unsorted columns
    with pytest.raises(ValueError):
        CsrMatrix(2, [0, 2, 1], [0, 1], [1.0, 1.0])  # decreasing row_ptr


def test_spmv_identity_and_row_sums():
    I3 = CsrMatrix.from_dense(np.eye(3))
    np.testing.assert_array_equal(spmv(I3, np.array([1.0, 2.0, 3.0])), [1.0, 2.0, 3.0])
    T = tridiag(3, -1.0, 2.0, -1.0)
    np.testing.assert_array_equal(spmv(T, np.ones(3)), [1.0, 0.0, 1.0])


def test_spmv_matches_dense_and_counts(rng):
    D = random_sparse(5, rng, density=0.4)
    A = CsrMatrix.from_dense(D)
    x = rng.standard_normal(5)
    c = MatvecCounter()
    y = spmv(A, x, c)
    assert np.linalg.norm(y - D @ x) <= 1e-14 * max(np.linalg.norm(D @ x), 1.0)
    assert c.matvecs == 1


def test_spmv_dimension_mismatch():
    with pytest.raises(ValueError):
        spmv(CsrMatrix.from_dense(np.eye(3)), np.ones(4))


@given(st.floats(-3, 3), st.floats(-3, 3), st.integers(0, 10**6))
def test_spmv_linearity(a, b, seed):
    rng = np.random.default_rng(seed)
    A = CsrMatrix.from_dense(random_sparse(12, rng))
    x, y = rng.standard_normal(12), rng.standard_normal(12)
    lhs = spmv(A, a * x + b * y)
    rhs = a * spmv(A, x) + b * spmv(A, y)
    assert np.linalg.norm(lhs - rhs) <= 1e-14 * 10 * max(np.linalg.norm(lhs), 1.0)


# ---- expm_dense ---------------------------------------------------------
def test_expm_trivial_cases():
    np.testing.assert_array_equal(expm_dense(np.zeros((2, 2)), 3.7), np.eye(2))
    np.testing.assert_allclose(expm_dense(np.diag([1.0, 2.0]), 1.0),
                               np.diag([math.exp(-1), math.exp(-2)]), rtol=1e-15)


def test_expm_rotation():
    # -tH = (pi/2) J with J = [[0, -1], [1, 0]], so exp(-tH) rotates by +pi/2
    H = np.array([[0.0, 1.0], [-1.0, 0.0]])
    a = np.pi / 2
    R = np.array([[np.cos(a), -np.sin(a)], [np.sin(a), np.cos(a)]])
    np.testing.assert_allclose(expm_dense(H, np.pi / 2), R, atol=1e-15)


def test_expm_matches_taylor(rng):
    for _ in range(10):
        H = rng.standard_normal((6, 6))
        H /= np.linalg.norm(H, 1)
        E = expm_dense(H, 1.0)
        T = taylor_expm(-H)
        assert np.linalg.norm(E - T, 1) <= 1e-13 * np.linalg.norm(T, 1)


def test_expm_errors():
    with pytest.raises(ValueError):
        expm_dense(np.ones((2, 3)))
    with pytest.raises(DivergenceError):
        expm_dense(np.array([[-1e300, 0.0], [0.0, 0.0]]), 1e10)


@given(st.integers(0, 10**6), st.floats(0, 1), st.floats(0, 1))
def test_expm_semigroup(seed, t, s):
    rng = np.random.default_rng(seed)
    H = rng.standard_normal((5, 5))
    H *= 2.0 / np.linalg.norm(H, 2)
    lhs = expm_dense(H, t + s)
    assert np.linalg.norm(lhs - expm_dense(H, t) @ expm_dense(H, s)) <= 1e-11 * np.linalg.norm(lhs)


# ---- phi_chain -----------------------------------------------------------
def test_phi_chain_examples():
    ch = phi_chain(np.zeros((1, 1)), 1.0, 2)
    np.testing.assert_allclose([ch[0][0, 0], ch[1][0, 0], ch[2][0, 0]], [1.0, 1.0, 0.5],
                               rtol=1e-15)
    ch = phi_chain(np.array([[1.0]]), 1.0, 1)
    assert ch[1][0, 0] == pytest.approx((math.exp(-1) - 1) / -1, rel=1e-14)
    assert abs(ch[1][0, 0] - 0.63212) < 1e-5


def test_phi_chain_order_zero_and_consistency(rng):
    H = rng.standard_normal((4, 4))
    np.testing.assert_array_equal(phi_chain(H, 0.7, 0)[0], expm_dense(H, 0.7))
    assert np.linalg.norm(phi_chain(H, 0.7, 3)[0] - expm_dense(H, 0.7)) <= 1e-12
    with pytest.raises(ValueError):
        phi_chain(H, 1.0, -1)


@given(st.floats(1e-2, 5.0), st.booleans())
def test_phi_recursion_scalar(mag, neg):
    z = -mag if neg else mag
    ch = phi_chain(np.array([[-z]]), 1.0, 5)   # phi_k(-t*H) = phi_k(z)
    for k in range(1, 6):
        expected = (ch[k - 1][0, 0] - 1.0 / math.factorial(k - 1)) / z
        assert abs(ch[k][0, 0] - expected) <= 1e-10 * abs(ch[k][0, 0])


# ---- tridiagonal / sparse LU ----------------------------------------------
def test_lu_tridiagonal_examples(rng):
    np.testing.assert_array_equal(
        lu_solve_tridiagonal(np.zeros(1), np.zeros(2), np.zeros(1), 5.0, [1.0, 2.0]), [1.0, 2.0])
    x = lu_solve_tridiagonal([-1.0], [2.0, 2.0], [-1.0], 1.0, [2.0, 2.0])
    np.testing.assert_allclose(x, [1.0, 1.0], rtol=1e-15)
    n = 50
    lo, up = rng.standard_normal(n - 1), rng.standard_normal(n - 1)
    d = 3.0 + np.abs(rng.standard_normal(n))
    b = rng.standard_normal(n)
    x = lu_solve_tridiagonal(lo, d, up, 0.7, b)
    M = np.eye(n) + 0.7 * (np.diag(d) + np.diag(lo, -1) + np.diag(up, 1))
    assert np.linalg.norm(M @ x - b) <= 1e-12 * np.linalg.norm(b)


def test_lu_tridiagonal_zero_pivot():
    with pytest.raises(SingularMatrixError):
        lu_solve_tridiagonal([1.0], [-1.0, 0.0], [1.0], 1.0, [1.0, 1.0])


def test_sparse_lu_examples(rng):
    Z = CsrMatrix.from_dense(np.zeros((3, 3)))
    b = rng.standard_normal(3)
    np.testing.assert_allclose(sparse_lu(Z, 1.0).solve(b), b, rtol=1e-15)
    D = CsrMatrix.from_dense(np.diag([1.0, 2.0, 3.0, 4.0]))
    lu = sparse_lu(D, 0.5)
    for i in range(4):
        e = np.eye(4)[i]
        np.testing.assert_allclose(lu.solve(e), e / (1 + 0.5 * (i + 1)), rtol=1e-15)
    A = conv_diff_2d(nx=20, pe=100)
    b = rng.standard_normal(A.n)
    x = sparse_lu(A, 0.1).solve(b)
    r = b - (x + 0.1 * spmv(A, x))
    assert np.linalg.norm(r) <= 1e-11 * np.linalg.norm(b)


def test_sparse_lu_singular():
    A = CsrMatrix.from_dense(-np.eye(3))
    with pytest.raises(SingularMatrixError):
        sparse_lu(A, 1.0)


# ---- GMRES --------------------------------------------------------------
def test_gmres_identity_and_diagonal():
    b = np.array([1.0, -2.0, 3.0])
    c = MatvecCounter()
    res = gmres(np.eye(3), b, rtol=1e-12, counter=c)
    np.testing.assert_allclose(res.x, b)
    assert res.iterations <= 1
    res = gmres(np.diag([1.0, 2.0, 4.0]), np.ones(3), rtol=1e-12)
    np.testing.assert_allclose(res.x, [1.0, 0.5, 0.25], rtol=1e-11)


def test_gmres_spd_tridiagonal_direct_residual():
    T = tridiag(100, -1.0, 2.5, -1.0).to_scipy()
    b = np.linspace(-1, 1, 100)
    res = gmres(T, b, rtol=1e-8, restart=30)
    assert np.linalg.norm(b - T @ res.x) <= 1e-8 * np.linalg.norm(b)


def test_gmres_ssor_preconditioned(rng):
    A = conv_diff_2d(nx=20, pe=100)
    M = sps.identity(A.n, format="csr") + 0.1 * A.to_scipy()
    b = rng.standard_normal(A.n)
    plain, pre = MatvecCounter(), MatvecCounter()
    r1 = gmres(M, b, rtol=1e-10, restart=100, counter=plain)
    r2 = gmres(M, b, rtol=1e-10, restart=100, precond=ssor_preconditioner(M), counter=pre)
    for r in (r1, r2):
        assert np.linalg.norm(b - M @ r.x) <= 1e-10 * np.linalg.norm(b)
    assert pre.matvecs < plain.matvecs


def test_ssor_matches_dense_formula(rng):
    D = random_spd(8, rng) + 8 * np.eye(8)
    P = ssor_preconditioner(sps.csr_array(D), omega=1.3)
    d = np.diag(D)
    w = 1.3
    L, U = np.tril(D, -1), np.triu(D, 1)
    Pm = (np.diag(d) + w * L) @ np.diag(1 / d) @ (np.diag(d) + w * U) / (w * (2 - w))
    r = rng.standard_normal(8)
    np.testing.assert_allclose(P.matvec(r), np.linalg.solve(Pm, r), rtol=1e-12)


def test_gmres_nonconvergence_carries_iterate():
    A = np.array([[0.0, 1.0], [-1.0, 0.0]]) @ np.diag([1.0, 1e-12])
    with pytest.raises((NonConvergenceError, SingularMatrixError)):
        gmres(np.kron(np.eye(20), A) + np.diag(np.r_[np.zeros(39), 1.0]), np.ones(40),
              rtol=1e-12, restart=2, maxiter=3)
    with pytest.raises(ValueError):
        gmres(np.eye(2), np.ones(2), rtol=0.0)
