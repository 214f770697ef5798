import warnings

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from numpy.polynomial import chebyshev as npcheb
from scipy.special import iv

from conftest import dense_expv
from expres.chebyshev import (cheb_coeffs, cheb_coeffs_bessel, cheb_expv, gershgorin_interval,
                              initial_defect_checkable)
from expres.linalg import CsrMatrix, MatvecCounter
from expres.problems import diag_test


def test_coefficients_of_exp():
    c = cheb_coeffs(30, M=64)
    assert abs(c(0.0) - 1.0) <= 1e-14
    assert c.c_unshifted[0] == pytest.approx(2.532131755, abs=1e-9)
    np.testing.assert_allclose(c.c_unshifted[:10], 2 * iv(np.arange(10), 1.0), atol=1e-15)
    c0 = cheb_coeffs(0)
    assert c0.c.shape == (1,)
    assert c0(0.3) == pytest.approx(np.exp(1.0) * 0.5 * c0.c[0])


def test_coefficient_errors():
    with pytest.raises(ValueError):
        cheb_coeffs(-1)
    with pytest.raises(ValueError):
        cheb_coeffs(10, M=10)
    with pytest.raises(ValueError):
        cheb_coeffs_bessel(-1)


@given(st.floats(0.1, 200.0), st.integers(5, 60))
def test_quadrature_matches_bessel(scale, m):
    q = cheb_coeffs(m, scale=scale)
    b = cheb_coeffs_bessel(m, scale=scale)
    np.testing.assert_allclose(q.c, b.c, atol=1e-14)


@given(st.floats(-1.0, 1.0))
def test_truncation_converges_scalar(x):
    c = cheb_coeffs(25)
    assert c(x) == pytest.approx(np.exp(x), rel=1e-14)


def test_zero_matrix():
    A = CsrMatrix.from_dense(np.zeros((5, 5)))
    v = np.arange(1.0, 6.0)
    r = cheb_expv(A, v, 1.0, interval=(0.0, 0.0))
    assert r.converged and r.matvecs == 1
    np.testing.assert_array_equal(r.y, v)
    r = cheb_expv(A, v, 1.0, tol=1e-12)
    assert r.converged
    np.testing.assert_allclose(r.y, v, rtol=1e-12)


def test_diag_large_meets_tolerance():
    A, v = diag_test(1000)
    tol = 1e-10
    r = cheb_expv(A, v, 1.0, tol=tol)
    assert r.converged
    ref = np.exp(-np.linspace(-1, 1, 1000)) * v
    err = np.linalg.norm(r.y - ref) / np.linalg.norm(v)
    assert err <= tol
    # the residual is a reliable, not overly pessimistic, error estimate here
    assert err <= r.residual_norm <= 100 * err


def test_nonnormal_case():
    A, v = diag_test(200, nonnormal=True)
    ref = dense_expv(A, v, 1.0)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        r = cheb_expv(A, v, 1.0, tol=1e-8, interval="gershgorin", coefficients="bessel")
    assert r.converged
    assert np.linalg.norm(r.y - ref) <= 1e-6 * np.linalg.norm(v)


def direct_residual(lam, Q, v, coef, k, t, c, L):
    """Dense residual of the degree-k approximation through its eigen-decomposition."""
    cc = coef.c[:k + 1].copy()
    cc[0] /= 2
    x = -t * (lam - c) / L
    p = npcheb.chebval(x, cc)
    dp = npcheb.chebval(x, npcheb.chebder(cc))
    g = np.exp(L - t * c)
    y_hat = g * p
    dy_hat = -c * g * p + g * dp * (-(lam - c) / L)
    r_hat = -lam * y_hat - dy_hat
    return Q @ (r_hat * (Q.T @ v))


@given(st.integers(0, 10**6), st.sampled_from([0.5, 1.0, 3.0]))
def test_residual_matches_direct_derivative(seed, t):
    rng = np.random.default_rng(seed)
    Q, _ = np.linalg.qr(rng.standard_normal((20, 20)))
    lam = rng.uniform(0.0, 4.0, 20)
    A = (Q * lam) @ Q.T
    v = rng.standard_normal(20)
    r = cheb_expv(A, v, t, tol=1e-300, N_max=30, interval=(0.0, 4.0), check_interval=False)
    L = t * 2.0
    coef = cheb_coeffs(30, scale=L)
    for k in (3, 8, 15):
        direct = direct_residual(lam, Q, v, coef, k, t, 2.0, L)
        est = r.history[k - 1].residual_norm * np.linalg.norm(v)
        assert est == pytest.approx(np.linalg.norm(direct), rel=1e-6, abs=1e-13)


def test_one_matvec_per_degree():
    A, v = diag_test(100)
    c = MatvecCounter()
    r = cheb_expv(A, v, 1.0, tol=1e-10, counter=c)
    assert [h.matvecs for h in r.history] == [k + 1 for k in range(1, r.steps + 1)]
    assert c.matvecs == r.matvecs == r.steps + 1


def test_gershgorin_warning():
    A, v = diag_test(50, nonnormal=True)
    with pytest.warns(RuntimeWarning):
        cheb_expv(A, v, 1.0, interval=(-1.0, 1.0), N_max=5)
    a, b = gershgorin_interval(A)
    assert a == pytest.approx(-2.0) and b == pytest.approx(2.0 - 2.0 / 49)


def test_initial_defect_checkable():
    assert initial_defect_checkable(1.0, 1e-8)
    assert not initial_defect_checkable(30.0, 1e-8)


def test_budget_and_errors():
    A, v = diag_test(100)
    r = cheb_expv(A, v, 1.0, tol=1e-15, N_max=3)
    assert r.status == "budget_exhausted" and r.steps == 3
    with pytest.raises(ValueError):
        cheb_expv(A, v, 0.0)
    with pytest.raises(ValueError):
        cheb_expv(A, v, 1.0, coefficients="taylor")
    with pytest.raises(ValueError):
        cheb_expv(A, v, 1.0, interval="power")


def test_divergence_reported():
    A, v = diag_test(50)
    with pytest.warns(RuntimeWarning):
        r = cheb_expv(A, v, 50.0, interval=(-0.01, 0.01), N_max=3000)
    assert r.status == "diverged"
    assert not np.isfinite(r.history[-1].residual_norm)
