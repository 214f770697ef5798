"""
Sparse and small dense kernels shared by all exponential solvers.

The sparse operator type is :class:`CsrMatrix`, a thin validated wrapper
around the CSR triple. Matrix-vector products go through :func:`spmv`, which
bumps an explicit :class:`MatvecCounter` owned by the caller, so the work
reported by every driver is counted rather than estimated.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sps
import scipy.sparse.linalg as spla

__all__ = [
    "CsrMatrix",
    "MatvecCounter",
    "PhiChain",
    "SingularMatrixError",
    "DivergenceError",
    "NonConvergenceError",
    "as_csr",
    "spmv",
    "expm_dense",
    "phi_chain",
    "lu_solve_tridiagonal",
    "sparse_lu",
    "SparseLU",
    "ssor_preconditioner",
    "gmres",
    "GmresResult",
]


class SingularMatrixError(ArithmeticError):
    """Raised when a factorization meets a zero (or numerically zero) pivot."""


class DivergenceError(ArithmeticError):
    """Raised when a dense computation overflows."""


class NonConvergenceError(RuntimeError):
    """Raised when an iterative solver exhausts its budget.

    The best iterate found so far is kept in ``x``.
    """

    def __init__(self, msg, x=None, residual=None):
        super().__init__(msg)
        self.x = x
        self.residual = residual


class CsrMatrix:
    """Square sparse matrix in compressed-sparse-row form.

    Parameters
    ----------
    n : int
        Dimension.
    row_ptr, col_idx, values : array_like
        The CSR triple. Column indices must be strictly increasing in each row.
    """

    __slots__ = ("n", "row_ptr", "col_idx", "values", "_csr")

    def __init__(self, n, row_ptr, col_idx, values):
        row_ptr = np.asarray(row_ptr, dtype=np.int64)
        col_idx = np.asarray(col_idx, dtype=np.int64)
        values = np.asarray(values, dtype=float)
        n = int(n)
        if row_ptr.shape != (n + 1,):
            raise ValueError("row_ptr must have length n+1")
        if row_ptr[0] != 0 or row_ptr[-1] != col_idx.size or col_idx.size != values.size:
            raise ValueError("inconsistent CSR triple")
        if np.any(np.diff(row_ptr) < 0):
            raise ValueError("row_ptr must be nondecreasing")
        if col_idx.size and (col_idx.min() < 0 or col_idx.max() >= n):
            raise ValueError("column index out of range")
        # strictly increasing columns inside every row
        d = np.diff(col_idx)
        row_start = np.zeros(col_idx.size, dtype=bool)
        row_start[row_ptr[:-1][row_ptr[:-1] < col_idx.size]] = True
        if np.any((d <= 0) & ~row_start[1:]):
            raise ValueError("column indices must be strictly increasing within a row")
        for a in (row_ptr, col_idx, values):
            a.setflags(write=False)
        self.n = n
        self.row_ptr = row_ptr
        self.col_idx = col_idx
        self.values = values
        self._csr = sps.csr_array((values, col_idx, row_ptr), shape=(n, n))

    @classmethod
    def from_scipy(cls, M):
        M = sps.csr_array(M, dtype=float)
        if M.shape[0] != M.shape[1]:
            raise ValueError("matrix must be square")
        M.sum_duplicates()
        M.sort_indices()
        return cls(M.shape[0], M.indptr, M.indices, M.data)

    @classmethod
    def from_dense(cls, D):
        return cls.from_scipy(sps.csr_array(np.asarray(D, dtype=float)))

    @property
    def shape(self):
        return (self.n, self.n)

    @property
    def nnz(self):
        return int(self.values.size)

    def to_scipy(self):
        """Return the underlying ``scipy.sparse.csr_array`` (shared, do not mutate)."""
        return self._csr

    def toarray(self):
        return self._csr.toarray()

    @property
    def T(self):
        return CsrMatrix.from_scipy(self._csr.T)

    def diagonal(self):
        return self._csr.diagonal()

    def band(self, lower, upper):
        """Entries with ``-lower <= j - i <= upper`` as a new matrix."""
        coo = self._csr.tocoo()
        keep = (coo.col - coo.row >= -lower) & (coo.col - coo.row <= upper)
        M = sps.csr_array((coo.data[keep], (coo.row[keep], coo.col[keep])), shape=self.shape)
        return CsrMatrix.from_scipy(M)

    def __matmul__(self, x):
        return self._csr @ x

    def __add__(self, other):
        return CsrMatrix.from_scipy(self._csr + as_csr(other)._csr)

    def __sub__(self, other):
        return CsrMatrix.from_scipy(self._csr - as_csr(other)._csr)

    def __mul__(self, alpha):
        return CsrMatrix.from_scipy(float(alpha) * self._csr)

    __rmul__ = __mul__

    def __repr__(self):
        return f"CsrMatrix(n={self.n}, nnz={self.nnz})"


def as_csr(A):
    """Coerce a dense array, scipy sparse matrix or :class:`CsrMatrix`."""
    if isinstance(A, CsrMatrix):
        return A
    if sps.issparse(A):
        return CsrMatrix.from_scipy(A)
    return CsrMatrix.from_dense(A)


@dataclass
class MatvecCounter:
    """Work counters owned by one driver run."""

    matvecs: int = 0
    solves: int = 0
    factorizations: int = 0

    def reset(self):
        self.matvecs = self.solves = self.factorizations = 0


def spmv(A, x, counter=None):
    """Return ``A @ x`` and increment ``counter.matvecs``.

    ``A`` may be a :class:`CsrMatrix`, a scipy sparse matrix, a dense array or
    any object with a ``matvec`` method.
    """
    x = np.asarray(x)
    n = A.shape[1]
    if x.shape[0] != n:
        raise ValueError(f"dimension mismatch: operator has {n} columns, vector has {x.shape[0]}")
    if counter is not None:
        counter.matvecs += 1
    if hasattr(A, "matvec") and not isinstance(A, np.ndarray):
        return A.matvec(x)
    return A @ x


def expm_dense(H, t=1.0):
    """Return ``exp(-t H)`` for a small dense matrix.

    Scaling and squaring with a degree-13 diagonal Pade approximant
    (``scipy.linalg.expm``).
    """
    H = np.atleast_2d(np.asarray(H, dtype=float))
    if H.ndim != 2 or H.shape[0] != H.shape[1]:
        raise ValueError("expm_dense needs a square matrix")
    with np.errstate(over="ignore"):
        X = -float(t) * H
    if not np.all(np.isfinite(X)):
        raise DivergenceError("non-finite entries in t*H")
    with np.errstate(over="ignore", invalid="ignore"):
        E = sla.expm(X)
    if not np.all(np.isfinite(E)):
        raise DivergenceError("overflow in the squaring phase of expm")
    return E


@dataclass
class PhiChain:
    """``phi_0(-tH), ..., phi_kmax(-tH)`` as a list of dense matrices."""

    order: int
    values: list = field(default_factory=list)

    def __getitem__(self, k):
        return self.values[k]


def _augmented(H, t, p, B=None):
    """Block matrix whose exponential carries the phi functions of ``-tH``.

    For ``W = [[-tH, B], [0, J_p]]`` with ``J_p`` the nilpotent shift, the
    top-right block of ``exp(W)`` is ``[phi_1 B, phi_2 B, ..., phi_p B]``
    (``B`` is the first column of the coupling, the rest follow by shifting).
    """
    m = H.shape[0]
    if B is None:
        B = np.eye(m)
    r = B.shape[1]
    W = np.zeros((m + p * r, m + p * r))
    W[:m, :m] = -t * H
    W[:m, m:m + r] = B
    for j in range(1, p):
        W[m + (j - 1) * r:m + j * r, m + j * r:m + (j + 1) * r] = np.eye(r)
    return W


def phi_chain(H, t, k_max):
    """Return the chain ``phi_k(-tH)``, ``k = 0..k_max``.

    ``phi_0 = exp`` and ``phi_k(z) = (phi_{k-1}(z) - phi_{k-1}(0)) / z``. All
    members come from a single exponential of an augmented block matrix.
    """
    if k_max < 0:
        raise ValueError("k_max must be nonnegative")
    H = np.atleast_2d(np.asarray(H, dtype=float))
    m = H.shape[0]
    if k_max == 0:
        return PhiChain(0, [expm_dense(H, t)])
    W = _augmented(H, float(t), k_max)
    E = expm_dense(-W, 1.0)
    values = [E[:m, :m]]
    for k in range(1, k_max + 1):
        values.append(E[:m, m + (k - 1) * m:m + k * m])
    return PhiChain(k_max, values)


def lu_solve_tridiagonal(lower, diag, upper, alpha, b):
    """Solve ``(I + alpha*M) x = b`` for tridiagonal ``M`` (Thomas algorithm).

    Parameters
    ----------
    lower, diag, upper : ndarray
        Sub-, main and superdiagonal of ``M`` (lengths n-1, n, n-1).
    alpha : float
        Shift multiplier.
    b : ndarray
        Right-hand side, shape ``(n,)`` or ``(n, k)``.
    """
    d = 1.0 + alpha * np.asarray(diag, dtype=float)
    lo = alpha * np.asarray(lower, dtype=float)
    up = alpha * np.asarray(upper, dtype=float)
    x = np.array(b, dtype=float, copy=True)
    n = d.size
    c = np.empty(max(n - 1, 0))
    piv = d[0]
    if piv == 0.0:
        raise SingularMatrixError("zero pivot at row 0")
    for i in range(n - 1):
        c[i] = up[i] / piv
        x[i] = x[i] / piv
        piv = d[i + 1] - lo[i] * c[i]
        if piv == 0.0:
            raise SingularMatrixError(f"zero pivot at row {i + 1}")
        x[i + 1] = x[i + 1] - lo[i] * x[i]
    x[n - 1] = x[n - 1] / piv
    for i in range(n - 2, -1, -1):
        x[i] = x[i] - c[i] * x[i + 1]
    return x


class SparseLU:
    """Factorization of ``I + gamma*A`` with a counted ``solve``."""

    def __init__(self, A, gamma, counter=None):
        A = as_csr(A)
        self.n = A.n
        self.gamma = float(gamma)
        self.counter = counter
        M = (sps.identity(A.n, format="csc") + self.gamma * A.to_scipy().tocsc()).tocsc()
        try:
            self._lu = spla.splu(M)
        except RuntimeError as exc:
            raise SingularMatrixError(f"I + gamma*A is singular: {exc}") from None
        if counter is not None:
            counter.factorizations += 1

    def solve(self, b):
        if self.counter is not None:
            self.counter.solves += 1
        return self._lu.solve(np.asarray(b, dtype=float))


def sparse_lu(A, gamma, counter=None):
    """Factor ``I + gamma*A``; the handle exposes ``solve(b)``."""
    return SparseLU(A, gamma, counter)


def _int32_csr(M):
    # the triangular solver wants C int indices
    M = sps.csr_array(M)
    return sps.csr_array((M.data, M.indices.astype(np.int32), M.indptr.astype(np.int32)),
                         shape=M.shape)


def ssor_preconditioner(M, omega=1.0):
    """SSOR preconditioner for a sparse matrix, as a ``LinearOperator``.

    ``P = (D + wL) D^{-1} (D + wU) / (w(2-w))``; applying ``P^{-1}`` costs one
    forward and one backward triangular sweep.
    """
    M = sps.csr_array(M.to_scipy() if isinstance(M, CsrMatrix) else M)
    D = M.diagonal()
    if np.any(D == 0):
        raise SingularMatrixError("SSOR needs a zero-free diagonal")
    lower = _int32_csr(sps.tril(M, k=-1) + sps.diags_array(D / omega))
    upper = _int32_csr(sps.triu(M, k=1) + sps.diags_array(D / omega))
    scale = (2.0 - omega) / omega

    def apply(r):
        z = spla.spsolve_triangular(lower, r, lower=True)
        z = scale * D * z
        return spla.spsolve_triangular(upper, z, lower=False)

    return spla.LinearOperator(M.shape, matvec=apply, dtype=float)


@dataclass
class GmresResult:
    x: np.ndarray
    iterations: int
    matvecs: int
    residual: float
    converged: bool


def gmres(op, b, rtol=1e-8, restart=100, precond=None, maxiter=None, x0=None,
          counter=None, raise_on_failure=True):
    """Restarted right-preconditioned GMRES.

    Stops once ``||b - op(x)|| <= rtol*||b||`` with the true residual. The
    matvec count is added to ``counter.matvecs``.

    Parameters
    ----------
    op : matrix or LinearOperator
    b : ndarray
    rtol : float
        Relative tolerance in (0, 1).
    restart : int
        Krylov dimension per cycle.
    precond : LinearOperator, optional
        Right preconditioner ``P ~ op^{-1}``.
    maxiter : int, optional
        Maximum number of restart cycles (default ``max(10, 2n/restart)``).
    """
    b = np.asarray(b, dtype=float)
    n = b.size
    if not 0 < rtol < 1:
        raise ValueError("rtol must lie in (0, 1)")
    A = spla.aslinearoperator(op.to_scipy() if isinstance(op, CsrMatrix) else op)
    P = (lambda z: z) if precond is None else (lambda z: precond @ z)
    if maxiter is None:
        maxiter = max(10, 2 * n // max(restart, 1) + 1)
    bnorm = np.linalg.norm(b)
    x = np.zeros(n) if x0 is None else np.array(x0, dtype=float)
    if bnorm == 0.0:
        return GmresResult(np.zeros(n), 0, 0, 0.0, True)
    nmv = 0
    iters = 0
    target = rtol * bnorm
    r = b - A.matvec(x) if x0 is not None else b.copy()
    nmv += x0 is not None
    beta = np.linalg.norm(r)
    for _ in range(maxiter):
        if beta <= target:
            break
        m = min(restart, n)
        V = np.zeros((m + 1, n))
        Z = np.zeros((m, n))
        Hh = np.zeros((m + 1, m))
        cs = np.zeros(m)
        sn = np.zeros(m)
        g = np.zeros(m + 1)
        g[0] = beta
        V[0] = r / beta
        j_done = 0
        for j in range(m):
            Z[j] = P(V[j])
            w = A.matvec(Z[j])
            nmv += 1
            iters += 1
            for i in range(j + 1):
                Hh[i, j] = V[i] @ w
                w -= Hh[i, j] * V[i]
            Hh[j + 1, j] = np.linalg.norm(w)
            for i in range(j):
                tmp = cs[i] * Hh[i, j] + sn[i] * Hh[i + 1, j]
                Hh[i + 1, j] = -sn[i] * Hh[i, j] + cs[i] * Hh[i + 1, j]
                Hh[i, j] = tmp
            rho = np.hypot(Hh[j, j], Hh[j + 1, j])
            cs[j], sn[j] = Hh[j, j] / rho, Hh[j + 1, j] / rho
            hnext = Hh[j + 1, j]
            Hh[j, j] = rho
            Hh[j + 1, j] = 0.0
            g[j + 1] = -sn[j] * g[j]
            g[j] = cs[j] * g[j]
            j_done = j + 1
            if abs(g[j + 1]) <= target or hnext <= 1e-14 * rho:
                break
            V[j + 1] = w / hnext
        yk = sla.solve_triangular(Hh[:j_done, :j_done], g[:j_done])
        x = x + yk @ Z[:j_done]
        r = b - A.matvec(x)
        nmv += 1
        beta = np.linalg.norm(r)
    if counter is not None:
        counter.matvecs += nmv
    converged = beta <= target
    if not converged and raise_on_failure:
        raise NonConvergenceError(
            f"GMRES did not reach rtol={rtol:g}: relative residual {beta / bnorm:.3e}",
            x=x, residual=beta)
    return GmresResult(x, iters, nmv, beta, converged)
