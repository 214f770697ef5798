"""
Exponential Richardson iteration and residual-based error bounds.

Given an approximation ``y_k(t)`` of ``y' = -Ay``, ``y(0) = v`` with residual
``r_k = -A y_k - y_k'``, the error solves ``e' = -A e + r_k``, ``e(0) = 0``.
Replacing ``A`` by a cheap ``M ~ A`` gives the correction

    et_k' = -M et_k + r_k(t),  et_k(0) = 0,     y_{k+1} = y_k + et_k,

and the new residual is ``r_{k+1} = (M - A) et_k``. Residuals are stored as
samples on a time grid and interpolated.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
from scipy.interpolate import PchipInterpolator

from .linalg import CsrMatrix, MatvecCounter, as_csr, phi_chain, spmv
from .ode import integrate
from .results import BUDGET_EXHAUSTED, CONVERGED, ExpvResult, HistoryEntry

__all__ = [
    "SampledVectorFunction",
    "Preconditioner",
    "exp_richardson",
    "phi_error_bound",
    "richardson_contraction_bound",
    "is_spd",
]


class SampledVectorFunction:
    """Vector function of time stored as samples on a grid.

    Interpolation is piecewise cubic with monotone-limited slopes (PCHIP),
    so grid values are reproduced exactly. Evaluation clamps ``t`` to the
    grid range.
    """

    def __init__(self, grid, samples):
        grid = np.asarray(grid, dtype=float)
        samples = np.asarray(samples, dtype=float)
        if grid.ndim != 1 or grid.size < 2 or np.any(np.diff(grid) <= 0):
            raise ValueError("grid must be strictly increasing with at least 2 points")
        if grid[0] != 0.0:
            raise ValueError("grid must start at 0")
        if samples.shape[0] != grid.size:
            raise ValueError("one sample per grid point required")
        self.grid = grid
        self.samples = samples
        self._interp = PchipInterpolator(grid, samples, axis=0)

    @classmethod
    def constant(cls, vec, t_end, s=20):
        grid = np.linspace(0.0, t_end, s)
        return cls(grid, np.tile(np.asarray(vec, dtype=float), (s, 1)))

    @property
    def t_end(self):
        return self.grid[-1]

    def __call__(self, t):
        t = np.clip(t, self.grid[0], self.grid[-1])
        hit = np.nonzero(self.grid == t)[0] if np.ndim(t) == 0 else ()
        if len(hit):
            return self.samples[hit[0]].copy()
        return self._interp(t)

    def norms(self):
        return np.linalg.norm(self.samples, axis=1)

    def envelope(self, t=None):
        """``[r_bar(t)]_i = max_{grid s <= t} |r_i(s)|``."""
        t = self.t_end if t is None else t
        keep = self.grid <= t * (1 + 1e-14)
        return np.max(np.abs(self.samples[keep]), axis=0)


@dataclass
class Preconditioner:
    """Splitting matrix ``M`` for the Richardson correction.

    ``kind="tridiag"`` keeps the three central diagonals of ``A`` (the
    default), ``"diag"`` only the diagonal.
    """

    M: CsrMatrix
    kind: str = "tridiag"
    factorizations: int = field(default=0)

    @classmethod
    def from_matrix(cls, A, kind="tridiag"):
        A = as_csr(A)
        if kind == "tridiag":
            return cls(A.band(1, 1), kind)
        if kind == "diag":
            return cls(A.band(0, 0), kind)
        if kind == "exact":
            return cls(A, kind)
        raise ValueError(f"unknown preconditioner {kind!r}")


def time_grid(t_end, s, kind="uniform"):
    """``s`` sample times in ``[0, t_end]``: uniform, or quadratically graded toward 0."""
    x = np.linspace(0.0, 1.0, s)
    if kind == "uniform":
        return t_end * x
    if kind == "graded":
        return t_end * x**2
    raise ValueError(f"unknown grid {kind!r}")


def exp_richardson(A, v, t_end, tol=1e-4, M="tridiag", max_iter=30, n_samples=20,
                   ode_rtol=None, counter=None, grid="uniform"):
    """Exponential Richardson iteration for ``exp(-t_end A) v``.

    Starts from ``y_0(t) = v`` (residual ``-Av``, constant in time). Each
    iteration integrates the correction equation with TR-BDF2, adds the
    correction on the grid and forms the next residual samples with one
    product by ``M - A`` per sample.

    Parameters
    ----------
    M : {"tridiag", "diag", "exact"} or Preconditioner
    tol : float
        Stop when ``max_j ||r_k(t_j)|| <= tol ||v||`` over the grid.
    max_iter : int
        Maximum number of corrections.
    n_samples : int
        Grid size for the residual (uniform in ``[0, t_end]``).
    ode_rtol : float, optional
        Integrator tolerance; ``tol / 10`` by default.

    Returns
    -------
    ExpvResult
        ``steps`` is the number of corrections; ``matvecs`` counts products
        with ``A`` and ``M - A``; ``factorizations``/``solves`` are the
        integrator's LU work. ``info["residual_t_end"]`` holds the final-time
        residual per iteration.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    A = as_csr(A)
    pre = M if isinstance(M, Preconditioner) else Preconditioner.from_matrix(A, M)
    counter = MatvecCounter() if counter is None else counter
    mv0 = counter.matvecs
    v = np.asarray(v, dtype=float)
    beta = float(np.linalg.norm(v))
    n = v.size
    grid = time_grid(t_end, n_samples, grid)
    rtol = tol / 10 if ode_rtol is None else ode_rtol
    atol = 1e-3 * rtol * beta / np.sqrt(n)
    MA = pre.M - A
    r = SampledVectorFunction(grid, np.tile(-spmv(A, v, counter), (n_samples, 1)))
    y_grid = np.tile(v, (n_samples, 1))
    history = []
    res_end = []
    nfac = nsolve = 0
    status = BUDGET_EXHAUSTED
    H = pre.M.to_scipy()
    for it in range(max_iter + 1):
        res = float(np.max(r.norms())) / beta
        res_end.append(float(np.linalg.norm(r.samples[-1])) / beta)
        history.append(HistoryEntry(it, counter.matvecs - mv0, res_end[-1], res,
                                    inner_work=nsolve))
        if res <= tol:
            status = CONVERGED
            break
        if it == max_iter:
            break
        sol = integrate(H, r, None, t_end, rtol=rtol, atol=atol)
        nfac += sol.nfactor
        nsolve += sol.nsolve
        e = sol(grid)
        e[0] = 0.0
        y_grid += e
        r = SampledVectorFunction(grid, np.array([spmv(MA, ej, counter) for ej in e]))
    pre.factorizations += nfac
    return ExpvResult(y=y_grid[-1].copy(), status=status, history=history,
                      matvecs=counter.matvecs - mv0, inner_work=nsolve, solves=nsolve,
                      factorizations=nfac, steps=len(history) - 1,
                      info={"residual_t_end": res_end, "grid": grid, "y_grid": y_grid,
                            "residual": r})


def is_spd(A, rtol=1e-12):
    """Symmetric with nonnegative spectrum (dense check for n <= 500, Gershgorin above)."""
    A = as_csr(A)
    S = A.to_scipy()
    if S.nnz == 0:
        return True
    scale = abs(S).max()
    if abs(S - S.T).max() > rtol * scale:
        return False
    if A.n <= 500:
        return bool(np.linalg.eigvalsh(A.toarray()).min() >= -1e-10 * scale)
    d = S.diagonal()
    radius = np.asarray(abs(S).sum(axis=1)).ravel() - np.abs(d)
    return bool(np.min(d - radius) >= -1e-10 * scale)


def _dense(A):
    return A.toarray() if isinstance(A, CsrMatrix) or hasattr(A, "toarray") else np.asarray(A)


def phi_error_bound(A, r, t, spd=False):
    """Residual-based bound on ``||exp(-tA)v - y_k(t)||_2``.

    With ``r_bar(t)`` the elementwise maximum of ``|r(s)|`` over the
    samples ``s <= t``:

    * ``spd=True``: ``t ||r_bar(t)||`` (rejects non-SPD ``A``);
    * otherwise: ``|| |t phi(-tA)| r_bar(t) ||`` with ``phi(x) = (e^x - 1)/x``,
      evaluated densely (``n <= 500``).

    Parameters
    ----------
    r : SampledVectorFunction or (grid, samples)
    """
    if not isinstance(r, SampledVectorFunction):
        r = SampledVectorFunction(*r)
    rbar = r.envelope(t)
    if not np.any(rbar) or t == 0:
        return 0.0
    if spd:
        if not is_spd(A):
            raise ValueError("spd=True but A is not symmetric positive semidefinite")
        return float(t * np.linalg.norm(rbar))
    D = _dense(A)
    if D.shape[0] > 500:
        raise ValueError("the elementwise bound is evaluated densely; n must not exceed 500")
    tphi = t * phi_chain(D, t, 1)[1]
    return float(np.linalg.norm(np.abs(tphi) @ rbar))


def richardson_contraction_bound(A, M, t_grid, norm=2):
    """Residual reduction factors of one Richardson step.

    Returns ``(exp_bound, linear_bound)``: ``exp_bound[i]`` is
    ``|| |t (M - A) phi(-t M)| ||`` at ``t = t_grid[i]`` and ``linear_bound``
    is ``||(M - A) M^{-1}||``, the factor of the linear-system Richardson
    iteration. Dense evaluation.
    """
    A = _dense(A)
    M = _dense(M)
    MA = M - A
    t_grid = np.atleast_1d(np.asarray(t_grid, dtype=float))
    out = np.zeros(t_grid.size)
    for i, t in enumerate(t_grid):
        if t == 0:
            continue
        tphi = t * phi_chain(M, t, 1)[1]
        out[i] = np.linalg.norm(np.abs(MA @ tphi), norm)
    lin = float(np.linalg.norm(MA @ sla.inv(M), norm))
    return out, lin
