import numpy as np
import pytest
import scipy.linalg as sla
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import dense_expv, random_spd
from expres.linalg import CsrMatrix
from expres.problems import conv_diff_2d, default_v, tridiag
from expres.richardson import (Preconditioner, SampledVectorFunction, exp_richardson, is_spd,
                               phi_error_bound, richardson_contraction_bound, time_grid)


def test_sampled_function_exact_at_grid(rng):
    grid = np.linspace(0.0, 2.0, 9)
    samples = rng.standard_normal((9, 4))
    f = SampledVectorFunction(grid, samples)
    for j, t in enumerate(grid):
        np.testing.assert_array_equal(f(t), samples[j])
    np.testing.assert_array_equal(f(5.0), samples[-1])
    assert f.t_end == 2.0
    np.testing.assert_array_equal(f.envelope(), np.max(np.abs(samples), axis=0))
    np.testing.assert_array_equal(f.envelope(0.0), np.abs(samples[0]))


def test_sampled_function_constant_and_errors():
    f = SampledVectorFunction.constant(np.array([1.0, -2.0]), 3.0)
    np.testing.assert_allclose(f(1.234), [1.0, -2.0])
    with pytest.raises(ValueError):
        SampledVectorFunction([0.0, 0.0, 1.0], np.zeros((3, 2)))
    with pytest.raises(ValueError):
        SampledVectorFunction([0.5, 1.0], np.zeros((2, 2)))
    with pytest.raises(ValueError):
        SampledVectorFunction([0.0, 1.0], np.zeros((3, 2)))


def test_time_grid():
    np.testing.assert_allclose(time_grid(2.0, 5), [0, 0.5, 1, 1.5, 2])
    np.testing.assert_allclose(time_grid(1.0, 3, "graded"), [0, 0.25, 1])
    with pytest.raises(ValueError):
        time_grid(1.0, 3, "chebyshev")


def test_exact_splitting_converges_in_one_iteration():
    A = conv_diff_2d(nx=8, pe=10)
    v = default_v(A.n)
    r = exp_richardson(A, v, 1.0, tol=1e-6, M="exact")
    assert r.converged and r.steps == 1
    assert np.linalg.norm(r.y - dense_expv(A, v, 1.0)) <= 1e-6


def test_richardson_converges_to_exponential():
    # without the diffusion jump the tridiagonal splitting contracts on coarse meshes
    A = conv_diff_2d(nx=10, pe=20, jump=1.0)
    v = default_v(A.n)
    r = exp_richardson(A, v, 1.0, tol=1e-6)
    assert r.converged
    assert np.linalg.norm(r.y - dense_expv(A, v, 1.0)) <= 1e-5
    res = [h.residual_norm for h in r.history]
    assert res[-1] < res[0]


def test_residual_recursion_consistency():
    A = conv_diff_2d(nx=6, pe=30)
    v = default_v(A.n)
    one = exp_richardson(A, v, 1.0, tol=1e-300, max_iter=1, ode_rtol=1e-6)
    two = exp_richardson(A, v, 1.0, tol=1e-300, max_iter=2, ode_rtol=1e-6)
    MA = (Preconditioner.from_matrix(A).M - A).toarray()
    e = two.info["y_grid"] - one.info["y_grid"]
    np.testing.assert_allclose(two.info["residual"].samples, e @ MA.T, atol=1e-15)
    # the first residual is -Av at every grid point
    zero = exp_richardson(A, v, 1.0, tol=1e-300, max_iter=0, ode_rtol=1e-6)
    np.testing.assert_allclose(zero.info["residual"].samples[3], -(A.toarray() @ v), atol=1e-12)


def test_scalar_phi_bound():
    lam, t, r = 2.0, 0.7, 3.0
    R = SampledVectorFunction.constant(np.array([r]), 1.0)
    expect = (1 - np.exp(-t * lam)) / lam * r
    assert phi_error_bound(np.array([[lam]]), R, t) == pytest.approx(expect, rel=1e-13)
    assert phi_error_bound(np.array([[lam]]), R, t, spd=True) == pytest.approx(t * r)
    assert phi_error_bound(np.array([[lam]]), R, 0.0) == 0.0


def quadrature_error(D, R, t, nodes=400):
    """``|| int_0^t exp(-(t-s)A) r(s) ds ||`` by the composite Gauss rule."""
    x, wq = np.polynomial.legendre.leggauss(8)
    edges = np.linspace(0.0, t, nodes // 8 + 1)
    acc = np.zeros(D.shape[0])
    for a, b in zip(edges[:-1], edges[1:]):
        for xi, wi in zip(x, wq):
            s = 0.5 * (a + b) + 0.5 * (b - a) * xi
            acc += 0.5 * (b - a) * wi * (sla.expm(-(t - s) * D) @ R(s))
    return np.linalg.norm(acc)


@given(st.integers(0, 10**6))
@settings(max_examples=10)
def test_spd_bound_dominates_quadrature(seed):
    rng = np.random.default_rng(seed)
    D = random_spd(30, rng, cond=100)
    grid = np.linspace(0.0, 1.0, 6)
    R = SampledVectorFunction(grid, rng.standard_normal((6, 30)))
    err = quadrature_error(D, R, 1.0, nodes=80)
    assert err <= phi_error_bound(D, R, 1.0, spd=True) * (1 + 1e-10)
    assert err <= phi_error_bound(D, R, 1.0) * (1 + 1e-10)


def test_elementwise_bound_for_m_matrix(rng):
    # nonpositive off-diagonals make exp(-sA) entrywise nonnegative
    A = conv_diff_2d(nx=5, pe=5)
    D = A.toarray()
    assert np.all(D - np.diag(np.diag(D)) <= 0)
    grid = np.linspace(0.0, 2.0, 5)
    R = SampledVectorFunction(grid, rng.standard_normal((5, 25)))
    err = quadrature_error(D, R, 2.0, nodes=80)
    assert err <= phi_error_bound(A, R, 2.0) * (1 + 1e-10)


def test_bound_rejects_non_spd():
    A = np.array([[1.0, 2.0], [0.0, 1.0]])
    R = SampledVectorFunction.constant(np.ones(2), 1.0)
    with pytest.raises(ValueError):
        phi_error_bound(A, R, 1.0, spd=True)


def test_contraction_bound_constant_diagonal():
    n, t = 40, 1.5
    A = tridiag(n, -1.0, 2.0, -1.0)
    exp_b, lin = richardson_contraction_bound(A, Preconditioner.from_matrix(A, "diag").M,
                                              [0.0, t])
    c = np.cos(np.pi / (n + 1))
    assert exp_b[0] == 0.0
    # M = 2I: |t N phi(-2t)| = t phi(-2t) |N| and ||N|| = 2 cos(pi/(n+1))
    assert exp_b[1] == pytest.approx((1 - np.exp(-2 * t)) / 2 * 2 * c, rel=1e-10)
    assert lin == pytest.approx(c, rel=1e-10)


def test_diagonal_phi_norm(rng):
    lam = np.sort(rng.uniform(0.1, 5.0, 10))
    t = 0.8
    tphi = np.diag((1 - np.exp(-t * lam)) / lam)
    # phi is decreasing, so the largest entry belongs to the smallest eigenvalue
    assert np.linalg.norm(np.abs(tphi), 2) == pytest.approx((1 - np.exp(-t * lam[0])) / lam[0])
    R = SampledVectorFunction.constant(np.eye(10)[0], 1.0)
    assert phi_error_bound(np.diag(lam), R, t) == pytest.approx(tphi[0, 0], rel=1e-12)


def test_is_spd_and_preconditioner():
    assert is_spd(tridiag(10, -1.0, 2.0, -1.0))
    assert not is_spd(tridiag(10, -1.0, 2.0, -0.5))
    assert not is_spd(np.diag([1.0, -1.0]))
    assert is_spd(CsrMatrix.from_dense(np.zeros((3, 3))))
    A = conv_diff_2d(nx=5)
    assert Preconditioner.from_matrix(A, "diag").M.to_scipy().nnz == 25
    with pytest.raises(ValueError):
        Preconditioner.from_matrix(A, "ilu")
    with pytest.raises(ValueError):
        exp_richardson(A, default_v(25), 1.0, tol=0.0)


def test_budget_exhausted():
    A = conv_diff_2d(nx=10, pe=50)
    r = exp_richardson(A, default_v(A.n), 1.0, tol=1e-12, max_iter=2, M="diag", ode_rtol=1e-4)
    assert r.status == "budget_exhausted" and r.steps == 2
    assert len(r.info["residual_t_end"]) == 3


def test_first_residual_matches_exact_correction():
    # e_0(t) = -t phi_1(-tM) A v solves e' = -M e - A v, so r_1 = (M - A) e_0 exactly
    from expres.linalg import phi_chain
    A = conv_diff_2d(nx=6, pe=30)
    D = A.toarray()
    v = default_v(A.n)
    Md = Preconditioner.from_matrix(A).M.toarray()
    r = exp_richardson(A, v, 1.0, tol=1e-300, max_iter=1, ode_rtol=1e-8)
    R = r.info["residual"]
    for j in (1, 7, 19):
        t = R.grid[j]
        e = -t * phi_chain(Md, t, 1)[1] @ (D @ v)
        exact = (Md - D) @ e
        assert np.linalg.norm(R.samples[j] - exact) <= 1e-7 * np.linalg.norm(exact)
