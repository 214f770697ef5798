"""
Arnoldi/Lanczos approximation of ``exp(-tA) v`` with residual control.

For ``k`` Arnoldi steps, ``A V_k = V_k H_k + h_{k+1,k} v_{k+1} e_k^T`` and the
Galerkin approximation ``y_k(t) = V_k exp(-t H_k) beta e_1`` has the exact
ODE residual

    r_k(t) = -A y_k(t) - y_k'(t) = psi_k(t) v_{k+1},
    psi_k(t) = -beta h_{k+1,k} e_k^T exp(-t H_k) e_1,

so its norm costs nothing beyond the small exponential.
"""

from __future__ import annotations

import copy

import numpy as np

from .linalg import CsrMatrix, MatvecCounter, expm_dense, spmv
from .ode import integrate
from .results import BUDGET_EXHAUSTED, CONVERGED, ExpvResult, HistoryEntry

__all__ = [
    "KrylovDecomposition",
    "ScalarResidualFunction",
    "arnoldi_extend",
    "eval_y",
    "eval_y_prime",
    "residual",
    "residual_function",
    "generalized_residual_norm",
    "galerkin_defect",
    "continued_error_estimate",
    "expv_restarted",
    "is_symmetric",
]

BREAKDOWN_TOL = 1e-12


class ScalarResidualFunction:
    """Residual of rank one in time: ``r(t) = psi(t) * w``.

    Parameters
    ----------
    psi : callable
        Scalar function of ``t`` (vectorized over arrays of times).
    w : ndarray
        Constant direction.
    """

    def __init__(self, psi, w):
        self.psi = psi
        self.w = np.asarray(w, dtype=float)
        self.w_norm = float(np.linalg.norm(self.w))

    def __call__(self, t):
        return self.psi(t) * self.w

    def norm(self, t):
        return np.abs(self.psi(t)) * self.w_norm


def is_symmetric(A, rtol=1e-12):
    """True when ``||A - A^T||_F <= rtol ||A||_F`` (sparse or dense ``A``)."""
    if isinstance(A, CsrMatrix):
        S = A.to_scipy()
        return bool(np.sqrt(((S - S.T).multiply(S - S.T)).sum()) <= rtol * np.sqrt(S.multiply(S).sum()))
    if isinstance(A, np.ndarray):
        return bool(np.linalg.norm(A - A.T) <= rtol * np.linalg.norm(A))
    return False


class KrylovDecomposition:
    """Arnoldi relation ``A V_k = V_k H_k + h_next v_next e_k^T``.

    Built with :meth:`start` and grown in place by :func:`arnoldi_extend`.
    """

    def __init__(self, v, capacity=32, symmetric=False):
        v = np.asarray(v, dtype=float)
        beta = float(np.linalg.norm(v))
        if beta == 0.0:
            raise ValueError("zero start vector")
        self.n = v.size
        self.beta = beta
        self.k = 0
        self.symmetric = symmetric
        self.exhausted = False
        self._basis = np.zeros((capacity + 1, self.n))
        self._H = np.zeros((capacity + 1, capacity))
        self._basis[0] = v / beta

    start = classmethod(lambda cls, v, capacity=32, symmetric=False: cls(v, capacity, symmetric))

    def _grow(self, need):
        cap = self._H.shape[1]
        if need <= cap:
            return
        new = max(need, 2 * cap)
        B = np.zeros((new + 1, self.n))
        B[:self.k + 1] = self._basis[:self.k + 1]
        H = np.zeros((new + 1, new))
        H[:cap + 1, :cap] = self._H
        self._basis, self._H = B, H

    @property
    def V(self):
        return self._basis[:self.k].T

    @property
    def H(self):
        return self._H[:self.k, :self.k]

    @property
    def H_bar(self):
        return self._H[:self.k + 1, :self.k]

    @property
    def h_next(self):
        return float(self._H[self.k, self.k - 1]) if self.k else 0.0

    @property
    def v_next(self):
        return self._basis[self.k]

    def copy(self):
        return copy.deepcopy(self)


def arnoldi_extend(op, decomp, steps, counter=None):
    """Run ``steps`` more Arnoldi (or Lanczos) steps on ``decomp`` in place.

    Modified Gram-Schmidt with one full reorthogonalization pass. Stops early
    at an invariant subspace, i.e. when ``h_next < 1e-12 ||H||``; then
    ``h_next`` is set to zero and ``decomp.exhausted`` becomes true.
    """
    if steps < 1:
        raise ValueError("steps must be positive")
    decomp._grow(decomp.k + steps)
    B, H = decomp._basis, decomp._H
    for _ in range(steps):
        if decomp.exhausted:
            break
        k = decomp.k
        w = spmv(op, B[k], counter)
        if decomp.symmetric:
            if k > 0:
                H[k - 1, k] = H[k, k - 1]
                w -= H[k - 1, k] * B[k - 1]
            H[k, k] = B[k] @ w
            w -= H[k, k] * B[k]
            c = B[:k + 1] @ w
            w -= c @ B[:k + 1]
        else:
            for i in range(k + 1):
                c = B[i] @ w
                H[i, k] = c
                w -= c * B[i]
            c = B[:k + 1] @ w
            w -= c @ B[:k + 1]
            H[:k + 1, k] += c
        hn = float(np.linalg.norm(w))
        decomp.k = k + 1
        hnorm = np.linalg.norm(H[:k + 2, :k + 1])
        if hn <= BREAKDOWN_TOL * max(hnorm, np.finfo(float).tiny) or hn == 0.0:
            H[k + 1, k] = 0.0
            B[k + 1] = 0.0
            decomp.exhausted = True
            break
        H[k + 1, k] = hn
        B[k + 1] = w / hn
    return decomp


def _u(decomp, t):
    return decomp.beta * expm_dense(decomp.H, t)[:, 0]


def eval_y(decomp, t):
    """``y_k(t) = V_k exp(-t H_k) beta e_1``."""
    if decomp.k < 1:
        raise ValueError("empty decomposition")
    return decomp.V @ _u(decomp, t)


def eval_y_prime(decomp, t):
    """Exact time derivative ``-V_k H_k exp(-t H_k) beta e_1``."""
    return -decomp.V @ (decomp.H @ _u(decomp, t))


def residual_function(decomp):
    """``r_k(t) = psi_k(t) v_{k+1}`` as a :class:`ScalarResidualFunction`."""
    beta, h, k, H = decomp.beta, decomp.h_next, decomp.k, decomp.H.copy()

    def psi(t):
        t = np.asarray(t, dtype=float)
        vals = [-beta * h * expm_dense(H, s)[k - 1, 0] for s in np.atleast_1d(t).ravel()]
        return vals[0] if t.ndim == 0 else np.reshape(vals, t.shape)

    return ScalarResidualFunction(psi, decomp.v_next.copy())


def residual(decomp, t):
    """Return ``(psi_k(t), ||r_k(t)||)``.

    ``||r_k(t)|| = |psi_k(t)|`` because ``v_{k+1}`` has unit norm (or the
    residual vanishes at an invariant subspace).
    """
    if decomp.k < 1:
        raise ValueError("empty decomposition")
    psi = -decomp.beta * decomp.h_next * expm_dense(decomp.H, t)[decomp.k - 1, 0]
    return psi, abs(psi)


def generalized_residual_norm(decomp, t):
    """Norm of the generalized residual, ``t |psi_k(t)|``."""
    return t * residual(decomp, t)[1]


def galerkin_defect(decomp, t):
    """``||V_k^T r_k(t)||``; zero in exact arithmetic."""
    psi, _ = residual(decomp, t)
    return abs(psi) * float(np.linalg.norm(decomp.V.T @ decomp.v_next))


def continued_error_estimate(op, decomp, m, t, method="difference", counter=None, rtol=1e-10):
    """Estimate ``||exp(-tA)v - y_k(t)||`` by ``m`` further Arnoldi steps.

    ``method="difference"`` returns ``||u_{k+m}(t) - [u_k(t); 0]||``;
    ``method="ivp"`` integrates the projected error equation
    ``e' = -H_{k+m} e + psi_k(t) e_{k+1}``, ``e(0) = 0``. Both give the
    Galerkin solution of the error equation in the extended space. The
    caller's decomposition is not modified.
    """
    if m == 0:
        return 0.0
    k = decomp.k
    ext = decomp.copy()
    if not ext.exhausted:
        arnoldi_extend(op, ext, m, counter)
    K = ext.k
    if K == k:
        return 0.0
    if method == "difference":
        u_long = _u(ext, t)
        u_long[:k] -= _u(decomp, t)
        return float(np.linalg.norm(u_long))
    if method != "ivp":
        raise ValueError(f"unknown method {method!r}")
    beta, h, Hk = decomp.beta, decomp.h_next, decomp.H
    e_k1 = np.zeros(K)
    e_k1[k] = 1.0

    def forcing(s):
        return (-beta * h * expm_dense(Hk, s)[k - 1, 0]) * e_k1

    sol = integrate(ext.H, forcing, None, t, rtol=rtol, atol=rtol * beta * 1e-3)
    return float(np.linalg.norm(sol.y_end))


def expv_restarted(op, v, t_end, tol=1e-8, restart_len=100, criterion="residual",
                   budget=10000, counter=None, symmetric=None):
    """Restarted Arnoldi for ``exp(-t_end A) v`` with accumulated projections.

    Each cycle runs ``restart_len`` Arnoldi steps starting from the last basis
    vector of the previous cycle. The cycle Hessenbergs are kept in one
    block lower-triangular matrix, so after ``K`` steps in total the
    approximation is ``sum_c V^(c) u^(c)`` with
    ``u = exp(-t_end H_acc) beta e_1`` and the residual keeps the form of the
    unrestarted method.

    Parameters
    ----------
    criterion : {"residual", "generalized", "stagnation"}
        Stopping quantity compared with ``tol``: ``|psi|/beta``,
        ``t_end |psi|/beta`` or ``||y_k - y_{k-1}|| / ||y_k||``.
    budget : int
        Maximum number of matvecs.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    if restart_len < 2:
        raise ValueError("restart_len must be at least 2")
    if criterion not in ("residual", "generalized", "stagnation"):
        raise ValueError(f"unknown criterion {criterion!r}")
    counter = MatvecCounter() if counter is None else counter
    if symmetric is None:
        symmetric = is_symmetric(op)
    v = np.asarray(v, dtype=float)
    beta = float(np.linalg.norm(v))
    mv0 = counter.matvecs
    y_done = np.zeros_like(v)
    H_acc = np.zeros((0, 0))
    history = []
    start, start_norm = v, beta
    cycle = 0
    total = 0
    status = BUDGET_EXHAUSTED
    u_prev = None
    y = y_done
    while counter.matvecs - mv0 < budget:
        dec = KrylovDecomposition(start, capacity=restart_len, symmetric=symmetric)
        dec.beta = start_norm if cycle == 0 else 1.0
        off = H_acc.shape[0]
        u_cur = None
        for _ in range(restart_len):
            if counter.matvecs - mv0 >= budget:
                break
            arnoldi_extend(op, dec, 1, counter)
            total += 1
            K = off + dec.k
            Hb = np.zeros((K, K))
            Hb[:off, :off] = H_acc
            Hb[off:, off:] = dec.H
            if off:
                Hb[off, off - 1] = h_link
            u = beta * expm_dense(Hb, t_end)[:, 0]
            res = abs(dec.h_next * u[-1]) / beta
            u_cur = u[off:]
            if criterion == "residual":
                crit = res
            elif criterion == "generalized":
                crit = t_end * res
            else:
                y = y_done + dec.V @ u_cur
                if u_prev is None:
                    crit = np.inf
                else:
                    du = u_cur.copy()
                    du[:u_prev.size] -= u_prev
                    crit = float(np.linalg.norm(du) / max(np.linalg.norm(y), np.finfo(float).tiny))
                u_prev = u_cur
            history.append(HistoryEntry(total, counter.matvecs - mv0, res, crit, cycle=cycle))
            if crit <= tol or dec.exhausted:
                status = CONVERGED
                break
        y = y_done + dec.V @ u_cur
        if status == CONVERGED:
            break
        # restart: freeze this cycle's contribution, append its Hessenberg
        y_done = y
        H_acc = Hb
        h_link = dec.h_next
        start, start_norm = dec.v_next.copy(), 1.0
        u_prev = np.zeros(0)
        cycle += 1
    return ExpvResult(y=y, status=status, history=history, matvecs=counter.matvecs - mv0,
                      steps=total, info={"criterion": criterion, "restart_len": restart_len,
                                         "cycles": cycle + 1})
