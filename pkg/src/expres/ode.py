"""
Adaptive TR-BDF2 integrator for linear IVPs ``u' = -H u + g(t)``.

``H`` may be a small dense matrix (projected problems) or a sparse matrix
that is cheap to factor (tridiagonal splittings). Both implicit stages share
one factorization of ``I + d*h*H``, which is kept while the step size does
not change. Dense output is cubic Hermite on every accepted step.

:func:`integrate_polynomial_forcing` gives the closed-form solution for
polynomial forcing through phi-functions; it is the oracle the adaptive
integrator is checked against.
"""

from __future__ import annotations

import bisect
from dataclasses import dataclass
from math import factorial

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sps
import scipy.sparse.linalg as spla

from .linalg import CsrMatrix, _augmented, expm_dense

__all__ = [
    "LinearIvp",
    "OdeSolution",
    "StiffIntegrationError",
    "integrate",
    "integrate_polynomial_forcing",
]

GAMMA = 2.0 - np.sqrt(2.0)
D = GAMMA / 2.0  # equals (1-GAMMA)/(2-GAMMA)
_C_NEW = 1.0 / (GAMMA * (2.0 - GAMMA))
_C_OLD = (1.0 - GAMMA) ** 2 / (GAMMA * (2.0 - GAMMA))
_ERR_CONST = (-3.0 * GAMMA**2 + 4.0 * GAMMA - 2.0) / (12.0 * (2.0 - GAMMA))


class StiffIntegrationError(RuntimeError):
    """Raised when the step size underflows."""


@dataclass
class LinearIvp:
    """``u' = -H u + g(t)``, ``u(0) = u0`` on ``[0, t_end]``."""

    H: object
    g: object = None
    u0: np.ndarray = None
    t_end: float = 1.0
    rtol: float = 1e-6
    atol: float = 1e-12


class OdeSolution:
    """Piecewise cubic Hermite dense output of an accepted step sequence."""

    def __init__(self, ts, us, fs, nsteps, nrejected, nfactor, nsolve):
        self.ts = ts
        self.us = us
        self.fs = fs
        self.nsteps = nsteps
        self.nrejected = nrejected
        self.nfactor = nfactor
        self.nsolve = nsolve

    @property
    def t_end(self):
        return self.ts[-1]

    @property
    def y_end(self):
        return self.us[-1]

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        scalar = t.ndim == 0
        tt = np.clip(np.atleast_1d(t), self.ts[0], self.ts[-1])
        i = np.clip(np.searchsorted(self.ts, tt, side="right") - 1, 0, len(self.ts) - 2)
        t0, t1 = self.ts[i], self.ts[i + 1]
        h = t1 - t0
        s = ((tt - t0) / h)[:, None]
        h = h[:, None]
        h00 = 2 * s**3 - 3 * s**2 + 1
        h10 = s**3 - 2 * s**2 + s
        h01 = -2 * s**3 + 3 * s**2
        h11 = s**3 - s**2
        out = (h00 * self.us[i] + h10 * h * self.fs[i] + h01 * self.us[i + 1]
               + h11 * h * self.fs[i + 1])
        # exact at accepted step endpoints
        hit = tt == t1
        if np.any(hit):
            out[hit] = self.us[i[hit] + 1]
        hit = tt == t0
        if np.any(hit):
            out[hit] = self.us[i[hit]]
        return out[0] if scalar else out

    def project(self, z):
        """Scalar dense output of ``z . u(t)`` (same Hermite interpolant)."""
        return ProjectedOdeSolution(self.ts, self.us @ z, self.fs @ z)


class ProjectedOdeSolution:
    """Scalar Hermite interpolant; cheap to evaluate at single times."""

    def __init__(self, ts, us, fs):
        self.ts = ts
        self._ts = ts.tolist()
        self._us = us.tolist()
        self._fs = fs.tolist()

    def _eval(self, t):
        ts = self._ts
        t = min(max(t, ts[0]), ts[-1])
        i = min(max(bisect.bisect_right(ts, t) - 1, 0), len(ts) - 2)
        t0, t1 = ts[i], ts[i + 1]
        if t == t1:
            return self._us[i + 1]
        if t == t0:
            return self._us[i]
        h = t1 - t0
        s = (t - t0) / h
        s2, s3 = s * s, s * s * s
        return ((2 * s3 - 3 * s2 + 1) * self._us[i] + (s3 - 2 * s2 + s) * h * self._fs[i]
                + (3 * s2 - 2 * s3) * self._us[i + 1] + (s3 - s2) * h * self._fs[i + 1])

    def __call__(self, t):
        if np.ndim(t) == 0:
            return self._eval(float(t))
        return np.array([self._eval(x) for x in np.ravel(t)])


class _ShiftedSolver:
    """Factorizations of ``I + c*H`` cached by ``c``."""

    def __init__(self, H):
        self.sparse = sps.issparse(H) or isinstance(H, CsrMatrix)
        if isinstance(H, CsrMatrix):
            H = H.to_scipy()
        self.H = sps.csc_array(H) if self.sparse else np.atleast_2d(np.asarray(H, dtype=float))
        self.m = self.H.shape[0]
        self.c = None
        self.nfactor = 0
        self.nsolve = 0

    def factor(self, c):
        if c == self.c:
            return
        if self.sparse:
            self._lu = spla.splu((sps.identity(self.m, format="csc") + c * self.H).tocsc())
        else:
            self._lu = sla.lu_factor(np.eye(self.m) + c * self.H, check_finite=False)
        self.c = c
        self.nfactor += 1

    def solve(self, b):
        self.nsolve += 1
        if self.sparse:
            return self._lu.solve(b)
        return sla.lu_solve(self._lu, b, check_finite=False)

    def matvec(self, u):
        return self.H @ u


def integrate(H, g=None, u0=None, t_end=1.0, rtol=1e-6, atol=1e-12, h0=None, max_steps=200000):
    """Integrate ``u' = -H u + g(t)``, ``u(0) = u0`` on ``[0, t_end]`` with TR-BDF2.

    Parameters
    ----------
    H : ndarray, sparse matrix or LinearIvp
        System matrix (``m x m``). If a :class:`LinearIvp` is passed the other
        arguments are taken from it.
    g : callable, optional
        Forcing ``g(t) -> ndarray(m)``; zero when omitted.
    u0 : ndarray, optional
        Initial value; zero when omitted.
    rtol, atol : float
        Requested accuracy. A step is accepted when the filtered local error
        estimate satisfies ``|err_i| <= s*atol + tau*|u_i|`` componentwise,
        with ``tau = s*rtol``, ``s = sqrt(rtol/1e-2)`` clipped to
        ``[1e-2, 1]`` (and ``tau`` not below ``4 eps``). Per-step control of a
        second-order method gives global error ~ ``tau**(2/3)``; the
        tightening keeps the achieved global error near ``rtol`` for
        ``rtol >= 1e-6``. Below that the cost of a second-order method would
        grow like ``rtol**(-1/2)``, so the error is allowed to exceed ``rtol``
        moderately (up to about ``50 rtol`` at ``rtol = 1e-12``).

    Returns
    -------
    OdeSolution
        Callable dense output plus step/factorization/solve counts.
    """
    if isinstance(H, LinearIvp):
        ivp = H
        return integrate(ivp.H, ivp.g, ivp.u0, ivp.t_end, ivp.rtol, ivp.atol, h0, max_steps)
    if not 1e-14 <= rtol <= 0.5:
        raise ValueError("rtol must lie in [1e-14, 0.5]")
    shrink = float(np.clip(np.sqrt(rtol / 1e-2), 1e-2, 1.0))
    tau = max(rtol * shrink, 4 * np.finfo(float).eps)
    atol = atol * shrink
    solver = _ShiftedSolver(H)
    m = solver.m
    t_end = float(t_end)
    u = np.zeros(m) if u0 is None else np.array(u0, dtype=float)
    if g is None:
        def g(_t):
            return 0.0
    if t_end == 0.0:
        f = -solver.matvec(u) + g(0.0)
        return OdeSolution(np.array([0.0, 0.0]), np.array([u, u]), np.array([f, f]), 0, 0, 0, 0)

    t = 0.0
    f = -solver.matvec(u) + g(0.0)
    if h0 is None:
        sc = atol + tau * np.abs(u)
        d0 = np.max(np.abs(u) / sc)
        d1 = np.max(np.abs(f) / sc)
        h0 = 1e-6 * t_end if (d0 < 1e-5 or d1 < 1e-5) else 0.01 * d0 / d1
    h = min(max(h0, 1e-12 * t_end), t_end)
    ts, us, fs = [t], [u], [f]
    nrej = 0
    h_min = 1e-14 * t_end
    while t < t_end:
        if len(ts) > max_steps:
            raise StiffIntegrationError("maximum number of steps exceeded")
        last = t + h >= t_end * (1 - 1e-13)
        if last:
            h = t_end - t
        solver.factor(D * h)
        tg = t + GAMMA * h
        tn = t_end if last else t + h
        gg = g(tg)
        ug = solver.solve(u + D * h * (f + gg))
        fg = -solver.matvec(ug) + gg
        gn = g(tn)
        un = solver.solve(_C_NEW * ug - _C_OLD * u + D * h * gn)
        fn = -solver.matvec(un) + gn
        est = _ERR_CONST * 2.0 * h * (f / GAMMA - fg / (GAMMA * (1 - GAMMA)) + fn / (1 - GAMMA))
        est = solver.solve(est)
        scale = atol + tau * np.maximum(np.abs(u), np.abs(un))
        err = float(np.max(np.abs(est) / scale)) if m else 0.0
        if err <= 1.0:
            t = tn
            u, f = un, fn
            ts.append(t)
            us.append(u)
            fs.append(f)
            fac = 5.0 if err == 0 else min(5.0, max(0.2, 0.9 * err ** (-1.0 / 3.0)))
            if 1.0 <= fac <= 1.2:
                fac = 1.0
            h *= fac
        else:
            nrej += 1
            h *= min(0.9, max(0.2, 0.9 * err ** (-1.0 / 3.0)))
            if h < h_min:
                raise StiffIntegrationError(f"step size underflow at t={t:.6g} (h={h:.3g})")
    return OdeSolution(np.asarray(ts), np.asarray(us), np.asarray(fs), len(ts) - 1, nrej,
                       solver.nfactor, solver.nsolve)


def integrate_polynomial_forcing(H, coeffs, w_scale=1.0, t_eval=1.0, b=None, u0=None):
    """Exact solution of ``u' = -H u + w_scale*p(t)*b``, ``u(0) = u0``.

    ``p(t) = sum_j coeffs[j] t^j`` and ``b`` defaults to ``e_1``. Uses
    ``int_0^t exp(-(t-s)H) s^j ds = j! t^(j+1) phi_{j+1}(-tH)``; all phi
    actions at one time come from a single augmented exponential.

    Returns an array of shape ``(m,)`` for scalar ``t_eval`` and
    ``(len(t_eval), m)`` otherwise.
    """
    H = np.atleast_2d(np.asarray(H, dtype=float))
    m = H.shape[0]
    coeffs = np.atleast_1d(np.asarray(coeffs, dtype=float))
    d = coeffs.size - 1
    if d > 12:
        raise ValueError("polynomial degree must not exceed 12")
    if b is None:
        b = np.zeros(m)
        b[0] = 1.0
    b = np.asarray(b, dtype=float).reshape(m, 1)
    times = np.atleast_1d(np.asarray(t_eval, dtype=float))
    out = np.zeros((times.size, m))
    p = d + 1
    for i, t in enumerate(times):
        if t == 0.0:
            out[i] = 0.0 if u0 is None else u0
            continue
        E = expm_dense(-_augmented(H, t, p, b), 1.0)
        acc = np.zeros(m)
        for j in range(p):
            acc += coeffs[j] * factorial(j) * t ** (j + 1) * E[:m, m + j]
        out[i] = w_scale * acc
        if u0 is not None:
            out[i] += E[:m, :m] @ u0
    return out[0] if np.ndim(t_eval) == 0 else out
