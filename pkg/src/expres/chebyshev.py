"""
Chebyshev expansion of ``exp(-tA) v`` with an exact residual.

With ``X = -t(A - cI)/L`` (spectrum of ``X`` in ``[-1, 1]`` when the
spectrum of ``A`` lies in ``[c-d, c+d]`` and ``L = t d``),

    exp(-tA) = exp(-t(c-d)) exp(L(X - I)),

and ``exp(L(x-1))`` is expanded as ``p(x) = c_0/2 + sum_k c_k T_k(x)``.
Everything is carried in second-kind polynomials ``U_k(X) v``, using

    T_k = (U_k - U_{k-2})/2,  x T_k' = k (U_k + U_{k-2})/2,
    x T_k = (U_{k+1} - U_{k-3})/4,

with ``U_{-1} = 0`` and ``U_{-2} = -1``. The approximation
``y(s) = exp(L - s c) p(X(s)) v`` with ``X(s) = -s(A - cI)/L`` has residual

    -A y - y' = exp(L - s c)/s * X (L p(X) - p'(X)) v,

so only ``sum c_k T_k``, ``sum c_k X T_k`` and ``sum c_k X T_k'`` applied to
``v`` are needed. With ``c = 0`` and ``L = 1`` this is the plain expansion of
``exp(-tA)`` for ``||tA|| <= 1``.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from numpy.polynomial import chebyshev as npcheb
from scipy.fft import dct
from scipy.special import ive

from .linalg import MatvecCounter, as_csr, spmv
from .results import BUDGET_EXHAUSTED, CONVERGED, DIVERGED, ExpvResult, HistoryEntry

__all__ = ["ChebCoeffs", "cheb_coeffs", "cheb_coeffs_bessel", "cheb_expv", "gershgorin_interval",
           "initial_defect_checkable"]


@dataclass
class ChebCoeffs:
    """Interpolation coefficients of ``exp(scale*(x-1))`` at ``M`` Chebyshev roots.

    ``exp(scale*x) ~ exp(scale) * (c[0]/2 + sum_k c[k] T_k(x))``.
    """

    m: int
    c: np.ndarray
    M: int
    scale: float = 1.0

    @property
    def c_unshifted(self):
        """Coefficients of ``exp(scale*x)`` itself (may overflow for large scale)."""
        return np.exp(self.scale) * self.c

    def __call__(self, x, k=None):
        """Evaluate the degree-``k`` truncation (default ``m``) of ``exp(scale*x)``."""
        k = self.m if k is None else k
        cc = self.c[:k + 1].copy()
        cc[0] /= 2.0
        return np.exp(self.scale) * npcheb.chebval(x, cc)


def cheb_coeffs(m, M=None, scale=1.0):
    """Coefficients ``c_0..c_m`` of ``exp(scale*(x-1))`` by Chebyshev-root quadrature.

    ``c_k = (2/M) sum_{j=1}^M f(cos theta_j) cos(k theta_j)``, with
    ``theta_j = pi (j - 1/2) / M``, evaluated as a type-II DCT.

    Parameters
    ----------
    m : int
        Degree.
    M : int, optional
        Number of nodes, ``max(2m, 128)`` by default; must exceed ``m``.
    scale : float
        ``scale = 1`` gives the coefficients of ``exp(x)`` up to the factor ``e``.
    """
    if m < 0:
        raise ValueError("degree must be nonnegative")
    M = max(2 * m, 128) if M is None else int(M)
    if M < m + 1:
        raise ValueError("need M >= m + 1")
    theta = np.pi * (np.arange(1, M + 1) - 0.5) / M
    f = np.exp(scale * (np.cos(theta) - 1.0))
    c = dct(f, type=2)[:m + 1] / M
    return ChebCoeffs(m, c, M, float(scale))


def cheb_coeffs_bessel(m, scale=1.0):
    """Exact coefficients of ``exp(scale*(x-1))``: ``c_k = 2 exp(-scale) I_k(scale)``.

    Unlike the quadrature values, these are accurate relative to each
    ``|c_k|``, so tiny trailing coefficients carry no absolute rounding error.
    """
    if m < 0:
        raise ValueError("degree must be nonnegative")
    return ChebCoeffs(m, 2.0 * ive(np.arange(m + 1), scale), 0, float(scale))


def gershgorin_interval(A):
    """Real interval containing the real parts of all Gershgorin discs of ``A``."""
    S = as_csr(A).to_scipy()
    d = S.diagonal()
    radius = np.asarray(abs(S).sum(axis=1)).ravel() - np.abs(d)
    return float(np.min(d - radius)), float(np.max(d + radius))


def initial_defect_checkable(L, tol):
    """Whether ``|exp(L) p(0) - 1|`` can be resolved in double precision."""
    return L <= np.log(tol / (10 * np.finfo(float).eps))


def cheb_expv(A, v, t, tol=1e-8, N_max=2000, interval=None, counter=None, callback=None,
              check_interval=True, coefficients="quadrature"):
    """Residual-controlled Chebyshev approximation of ``exp(-tA) v``.

    Parameters
    ----------
    A : matrix
    v : ndarray
    t : float
        Positive time.
    tol : float
        Stop when ``||-A y_k - y_k'|| <= tol ||v||`` at ``t`` and, when it is
        resolvable, the initial value defect ``|y_k(0) - v| / ||v|| <= tol``.
    N_max : int
        Maximum degree (one matvec per degree).
    interval : (a, b), "gershgorin" or None
        Spectral interval of ``A``. ``None`` assumes the spectrum of ``tA``
        lies in ``[-1, 1]`` (the unscaled expansion).
    callback : callable, optional
        Called as ``callback(k, y)`` after each degree.
    check_interval : bool
        Warn if the Gershgorin interval of ``A`` is not contained in
        ``interval``.
    coefficients : {"quadrature", "bessel"}
        ``"quadrature"`` uses :func:`cheb_coeffs` with ``M = max(2 N_max, 128)``
        nodes. Their absolute rounding error (about ``1e-17``) is amplified by
        ``||U_k(X)||``, which for nonnormal ``A`` makes the error grow after
        a minimum. ``"bessel"`` uses :func:`cheb_coeffs_bessel` and avoids it.

    Returns
    -------
    ExpvResult
        ``info`` holds the degree and the interval used. The status is
        ``"diverged"`` when the residual overflows (spectrum outside the
        interval).
    """
    if t <= 0:
        raise ValueError("t must be positive")
    if tol <= 0:
        raise ValueError("tol must be positive")
    counter = MatvecCounter() if counter is None else counter
    v = np.asarray(v, dtype=float)
    nv = float(np.linalg.norm(v))
    if interval is None:
        a, b = -1.0 / t, 1.0 / t
    elif isinstance(interval, str):
        if interval != "gershgorin":
            raise ValueError(f"unknown interval {interval!r}")
        a, b = gershgorin_interval(A)
    else:
        a, b = map(float, interval)
    if check_interval and interval != "gershgorin" and min(A.shape) <= 10**6:
        ga, gb = gershgorin_interval(A)
        if ga < a - 1e-12 * max(1, abs(a)) or gb > b + 1e-12 * max(1, abs(b)):
            warnings.warn("Gershgorin interval of A exceeds the expansion interval; "
                          "the expansion may diverge", RuntimeWarning, stacklevel=2)
    mv0 = counter.matvecs
    c_mid, d_half = 0.5 * (a + b), 0.5 * (b - a)
    if d_half == 0.0:
        # A = c I on the given interval: one matvec confirms nothing more is needed
        Av = spmv(A, v, counter)
        res = float(np.linalg.norm(Av - c_mid * v)) * np.exp(-t * c_mid) / max(nv, 1e-300)
        y = np.exp(-t * c_mid) * v
        return ExpvResult(y=y, status=CONVERGED if res <= tol else BUDGET_EXHAUSTED,
                          history=[HistoryEntry(0, 1, res)], matvecs=1, steps=0,
                          info={"degree": 0, "interval": (a, b), "L": 0.0})
    if N_max < 1:
        raise ValueError("N_max must be positive")
    L = t * d_half
    front = np.exp(-t * a)
    if coefficients == "quadrature":
        coef = cheb_coeffs(N_max, scale=L)
    elif coefficients == "bessel":
        coef = cheb_coeffs_bessel(N_max, scale=L)
    else:
        raise ValueError(f"unknown coefficients {coefficients!r}")
    cc = coef.c
    check_defect = initial_defect_checkable(L, tol)

    def X(x):
        return -(spmv(A, x, counter) - c_mid * x) / d_half

    # rolling U_{k-3}, U_{k-2}, U_{k-1}, U_k; start at k = 1
    u3, u2, u1, u0 = -v, np.zeros_like(v), v.copy(), 2.0 * X(v)
    y = 0.5 * cc[0] * v
    sxt = 0.25 * cc[0] * u0      # sum c_j X T_j v
    sxdt = np.zeros_like(v)      # sum c_j X T_j' v
    p0 = 0.5 * cc[0]             # p_k(0), T_j(0) = cos(j pi/2)
    history = []
    status = BUDGET_EXHAUSTED
    k = 0
    for k in range(1, N_max + 1):
        u_new = 2.0 * X(u0) - u1
        ck = cc[k]
        y += 0.5 * ck * (u0 - u2)
        sxdt += 0.5 * ck * k * (u0 + u2)
        sxt += 0.25 * ck * (u_new - u3)
        if k % 2 == 0:
            p0 += ck * (1.0 if k % 4 == 0 else -1.0)
        u3, u2, u1, u0 = u2, u1, u0, u_new
        res = front / t * float(np.linalg.norm(L * sxt - sxdt)) / nv
        defect = abs(np.exp(L) * p0 - 1.0) if check_defect else 0.0
        history.append(HistoryEntry(k, counter.matvecs - mv0, res, max(res, defect)))
        if callback is not None:
            callback(k, front * y)
        if not np.isfinite(res):
            status = DIVERGED
            break
        if res <= tol and defect <= tol:
            status = CONVERGED
            break
    return ExpvResult(y=front * y, status=status, history=history, matvecs=counter.matvecs - mv0,
                      steps=k, info={"degree": k, "interval": (a, b), "L": L})
