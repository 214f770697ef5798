"""
Shift-and-invert (SaI) Arnoldi for ``exp(-tA) v``.

The Krylov space is built with ``(I + gamma A)^{-1}``:

    (I + gamma A)^{-1} V_k = V_k Ht_k + ht_{k+1,k} v_{k+1} e_k^T,

and the projected matrix is recovered as ``H_k = (Ht_k^{-1} - I) / gamma``.
Then ``A V_k = V_k H_k - (ht_{k+1,k}/gamma) w e_k^T Ht_k^{-1}`` with
``w = (I + gamma A) v_{k+1}``, so the residual of
``y_k = V_k exp(-t H_k) beta e_1`` is ``psi_k(t) w`` with

    psi_k(t) = beta (ht_{k+1,k}/gamma) e_k^T Ht_k^{-1} exp(-t H_k) e_1.
"""

from __future__ import annotations

import warnings

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sps

from .arnoldi import KrylovDecomposition, arnoldi_extend
from .linalg import (MatvecCounter, SingularMatrixError, as_csr, expm_dense, gmres, sparse_lu,
                     spmv, ssor_preconditioner)
from .results import BUDGET_EXHAUSTED, CONVERGED, ExpvResult, HistoryEntry

__all__ = ["InnerSolver", "SaiDecomposition", "sai_extend", "sai_residual", "sai_expv",
           "back_transform", "INNER_FLOOR"]

INNER_FLOOR = 1e-12
_COND_WARN = 1e12


class InnerSolver:
    """Solves ``(I + gamma A) x = b`` by sparse LU or SSOR-preconditioned GMRES.

    ``work`` accumulates LU solves (``"lu"``) or GMRES matvecs (``"gmres"``);
    ``per_call`` keeps the work of each call.
    """

    def __init__(self, A, gamma, kind="lu", restart=100, counter=None):
        if gamma <= 0:
            raise ValueError("gamma must be positive")
        if kind not in ("lu", "gmres"):
            raise ValueError(f"unknown inner solver {kind!r}")
        self.A = as_csr(A)
        self.gamma = float(gamma)
        self.kind = kind
        self.restart = restart
        self.counter = counter if counter is not None else MatvecCounter()
        self.work = 0
        self.per_call = []
        if kind == "lu":
            self._lu = sparse_lu(self.A, gamma, self.counter)
        else:
            self._M = sps.identity(self.A.n, format="csr") + self.gamma * self.A.to_scipy()
            self._P = ssor_preconditioner(self._M)

    def solve(self, b, rtol=INNER_FLOOR):
        if self.kind == "lu":
            x = self._lu.solve(b)
            w = 1
        else:
            inner = MatvecCounter()
            res = gmres(self._M, b, rtol=max(rtol, INNER_FLOOR), restart=self.restart,
                        precond=self._P, counter=inner)
            x, w = res.x, inner.matvecs
        self.work += w
        self.per_call.append(w)
        return x


class _InverseOp:
    """``b -> (I + gamma A)^{-1} b`` at the tolerance currently set."""

    def __init__(self, inner):
        self.inner = inner
        self.rtol = INNER_FLOOR
        self.shape = inner.A.shape

    def matvec(self, b):
        return self.inner.solve(b, self.rtol)


def back_transform(H_tilde, gamma):
    """``H = (H_tilde^{-1} - I) / gamma``; warns when ``H_tilde`` is ill conditioned."""
    k = H_tilde.shape[0]
    try:
        with warnings.catch_warnings():
            # exact singularity is reported below as SingularMatrixError
            warnings.simplefilter("ignore", sla.LinAlgWarning)
            lu = sla.lu_factor(H_tilde, check_finite=True)
    except (ValueError, sla.LinAlgError) as exc:
        raise SingularMatrixError(f"projected SaI matrix is singular: {exc}") from None
    if np.any(np.diag(lu[0]) == 0.0):
        raise SingularMatrixError("projected SaI matrix is singular")
    cond = np.linalg.cond(H_tilde, 1)
    if cond > _COND_WARN:
        warnings.warn(f"projected SaI matrix has condition number {cond:.2e}", RuntimeWarning,
                      stacklevel=2)
    Hinv = sla.lu_solve(lu, np.eye(k))
    return (Hinv - np.eye(k)) / gamma, lu


class SaiDecomposition:
    """Arnoldi decomposition of ``(I + gamma A)^{-1}`` plus derived quantities."""

    def __init__(self, A, v, gamma, inner="lu", capacity=32, counter=None, restart=100):
        self.A = as_csr(A)
        self.gamma = float(gamma)
        self.counter = counter if counter is not None else MatvecCounter()
        self.inner = inner if isinstance(inner, InnerSolver) else InnerSolver(
            self.A, gamma, inner, restart=restart, counter=self.counter)
        self._op = _InverseOp(self.inner)
        self.krylov = KrylovDecomposition(v, capacity=capacity, symmetric=False)
        self._w = None
        self._w_k = -1

    beta = property(lambda self: self.krylov.beta)
    k = property(lambda self: self.krylov.k)
    V = property(lambda self: self.krylov.V)
    H_tilde = property(lambda self: self.krylov.H)
    h_tilde_next = property(lambda self: self.krylov.h_next)
    v_next = property(lambda self: self.krylov.v_next)
    exhausted = property(lambda self: self.krylov.exhausted)

    @property
    def H(self):
        return back_transform(self.H_tilde, self.gamma)[0]

    @property
    def w(self):
        """``(I + gamma A) v_{k+1}``, one counted matvec per dimension."""
        if self._w_k != self.k:
            vn = self.v_next
            self._w = vn + self.gamma * spmv(self.A, vn, self.counter) if np.any(vn) else vn.copy()
            self._w_k = self.k
        return self._w


def sai_extend(A, decomp, steps, inner_rtol=INNER_FLOOR):
    """Extend ``decomp`` by ``steps`` SaI Arnoldi steps with inner tolerance ``inner_rtol``."""
    decomp._op.rtol = inner_rtol
    arnoldi_extend(decomp._op, decomp.krylov, steps)
    return decomp


def _psi_from(decomp, H, lu, t):
    """Scalar shift-and-invert residual prefactor at time ``t`` from a back-transformed ``H``."""
    u = expm_dense(H, t)[:, 0]
    z = sla.lu_solve(lu, u)
    return decomp.beta * decomp.h_tilde_next / decomp.gamma * z[-1]


def sai_residual(decomp, t, A_norm=None):
    """Return ``(psi_k(t), ||r_k(t)||, bound)``.

    ``||r_k(t)|| = |psi_k(t)| ||w||`` is exact. ``bound`` is
    ``|psi_k(t)| (1 + gamma ||A||)`` when ``A_norm`` is given, else ``None``.
    """
    if decomp.k < 1:
        raise ValueError("empty decomposition")
    if decomp.h_tilde_next == 0.0:
        return 0.0, 0.0, (0.0 if A_norm is not None else None)
    H, lu = back_transform(decomp.H_tilde, decomp.gamma)
    psi = _psi_from(decomp, H, lu, t)
    norm = abs(psi) * float(np.linalg.norm(decomp.w))
    bound = abs(psi) * (1.0 + decomp.gamma * A_norm) if A_norm is not None else None
    return psi, norm, bound


def relaxed_inner_rtol(tol, res_rel):
    """Inner tolerance for the next SaI step.

    Relaxed strategy: the inner solves may become less accurate as the outer
    residual ``res_rel`` (relative to ``||v||``) decreases, ``tol / res_rel``,
    clipped to ``[1e-12, 1e-2]``.
    """
    return float(min(1e-2, max(INNER_FLOOR, tol / max(res_rel, np.finfo(float).tiny))))


def sai_expv(A, v, t_end, tol=1e-8, inner="lu", gamma=None, budget=200, counter=None,
             relax=True, gmres_restart=100):
    """SaI Arnoldi approximation of ``exp(-t_end A) v`` with residual stopping.

    Parameters
    ----------
    inner : {"lu", "gmres"}
        Inner solver for ``(I + gamma A) x = b``.
    gamma : float, optional
        Shift; ``0.1 * t_end`` by default.
    budget : int
        Maximum number of outer steps.
    relax : bool
        Use the relaxed inner tolerance (see :func:`relaxed_inner_rtol`);
        otherwise every inner solve runs at ``1e-12``.

    Returns
    -------
    ExpvResult
        ``steps`` counts outer steps, ``inner_work`` the LU solves or GMRES
        matvecs, ``matvecs`` the products with ``A`` (inner GMRES products
        excluded, they are in ``inner_work``).
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    A = as_csr(A)
    counter = MatvecCounter() if counter is None else counter
    gamma = 0.1 * t_end if gamma is None else float(gamma)
    v = np.asarray(v, dtype=float)
    beta = float(np.linalg.norm(v))
    mv0, s0, f0 = counter.matvecs, counter.solves, counter.factorizations
    dec = SaiDecomposition(A, v, gamma, inner, capacity=min(budget, 64), counter=counter,
                           restart=gmres_restart)
    history = []
    res_rel = 1.0
    status = BUDGET_EXHAUSTED
    y = v.copy()
    for step in range(1, budget + 1):
        rtol = relaxed_inner_rtol(tol, res_rel) if relax else INNER_FLOOR
        sai_extend(A, dec, 1, rtol)
        H, lu = back_transform(dec.H_tilde, gamma)
        u = beta * expm_dense(H, t_end)[:, 0]
        y = dec.V @ u
        if dec.exhausted:
            res_rel = 0.0
        else:
            psi = dec.h_tilde_next / gamma * sla.lu_solve(lu, u)[-1]
            res_rel = abs(psi) * float(np.linalg.norm(dec.w)) / beta
        history.append(HistoryEntry(step, counter.matvecs - mv0, res_rel,
                                    inner_work=dec.inner.work))
        if res_rel <= tol:
            status = CONVERGED
            break
    return ExpvResult(y=y, status=status, history=history, matvecs=counter.matvecs - mv0,
                      inner_work=dec.inner.work, solves=counter.solves - s0,
                      factorizations=counter.factorizations - f0, steps=len(history),
                      info={"gamma": gamma, "inner": dec.inner.kind,
                            "inner_per_step": list(dec.inner.per_call)})
