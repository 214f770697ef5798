"""
Test operators and starting vectors.

* :func:`conv_diff_2d` -- five-point convection-diffusion operator on the unit
  square with a diffusion jump and a skew-symmetric convection part.
* :func:`diag_test` -- diagonal (optionally bidiagonal, nonnormal) matrix with
  spectrum evenly spread over [-1, 1] and a Gaussian random vector.
* :func:`laplacian_3d_periodic` / :func:`initial_vector` -- periodic 3D heat
  equation and the two starting vectors that do or do not respect periodicity.
* :func:`default_v` -- normalized vector of equal entries.
* :func:`write_matrix_market` / :func:`read_matrix_market` -- exchange with
  other tools.
"""

from dataclasses import dataclass

import numpy as np
import scipy.io
import scipy.sparse as sps

from .linalg import CsrMatrix

__all__ = [
    "ConvDiffSpec",
    "conv_diff_2d",
    "convection_part",
    "diag_test",
    "laplacian_3d_periodic",
    "initial_vector",
    "default_v",
    "tridiag",
    "write_matrix_market",
    "read_matrix_market",
]


@dataclass(frozen=True)
class ConvDiffSpec:
    """Convection-diffusion operator parameters.

    ``nx`` counts interior points per side; the mesh width is ``1/(nx+1)``,
    so ``nx=100`` is the 102 x 102 mesh with n = 10^4 unknowns.

    ``scale="mesh"`` returns the stencil in mesh units (the difference
    operator multiplied by ``h**2``), whose norm does not grow under mesh
    refinement; ``scale="physical"`` keeps the ``1/h**2`` factors.
    """

    nx: int
    pe: float = 0.0
    jump: float = 1e3
    d2_ratio: float = 0.5
    scale: str = "mesh"

    def diffusion(self, x, y):
        inside = (x >= 0.25) & (x <= 0.75) & (y >= 0.25) & (y <= 0.75)
        return np.where(inside, self.jump, 1.0)


def _harmonic(a, b):
    return 2.0 * a * b / (a + b)


def _grid(nx):
    h = 1.0 / (nx + 1)
    x = h * np.arange(nx + 2)
    return h, x


def convection_part(spec):
    """Skew-symmetric convection matrix ``Pe * C`` on the interior nodes."""
    nx = spec.nx
    h, x = _grid(nx)
    X, Y = np.meshgrid(x, x, indexing="ij")
    vel = {0: (X + Y)[1:nx + 1, 1:nx + 1], 1: (X - Y)[1:nx + 1, 1:nx + 1]}
    n = nx * nx
    k = np.arange(n).reshape(nx, nx)
    rows, cols, vals = [], [], []
    # split form 0.5*v.grad(u) + 0.5*div(v u) with central differences gives
    # C[p, q] = (v_p + v_q) / (4h) for the +axis neighbour q, and -C[q, p]
    for axis in (0, 1):
        v = vel[axis]
        if axis == 0:
            a, b, c = k[:-1, :], k[1:, :], (v[:-1, :] + v[1:, :]) / (4.0 * h)
        else:
            a, b, c = k[:, :-1], k[:, 1:], (v[:, :-1] + v[:, 1:]) / (4.0 * h)
        rows += [a.ravel(), b.ravel()]
        cols += [b.ravel(), a.ravel()]
        vals += [c.ravel(), -c.ravel()]
    C = sps.csr_array((spec.pe * np.concatenate(vals),
                       (np.concatenate(rows), np.concatenate(cols))), shape=(n, n))
    return CsrMatrix.from_scipy(C)


def _diffusion_part(spec):
    nx = spec.nx
    h, x = _grid(nx)
    X, Y = np.meshgrid(x, x, indexing="ij")
    D1 = spec.diffusion(X, Y)
    D2 = spec.d2_ratio * D1
    n = nx * nx
    k = np.arange(n).reshape(nx, nx)
    diag = np.zeros((nx, nx))
    rows, cols, vals = [], [], []
    for D, axis in ((D1, 0), (D2, 1)):
        # face coefficients between node p and its +axis neighbour
        if axis == 0:
            face = _harmonic(D[:-1, :], D[1:, :])[:, 1:nx + 1]  # (nx+1, nx)
            lo, hi = face[:-1, :], face[1:, :]
        else:
            face = _harmonic(D[:, :-1], D[:, 1:])[1:nx + 1, :]  # (nx, nx+1)
            lo, hi = face[:, :-1], face[:, 1:]
        diag += (lo + hi) / h**2
        if axis == 0:
            a, b = k[:-1, :].ravel(), k[1:, :].ravel()
            c = hi[:-1, :].ravel()
        else:
            a, b = k[:, :-1].ravel(), k[:, 1:].ravel()
            c = hi[:, :-1].ravel()
        rows += [a, b]
        cols += [b, a]
        vals += [-c / h**2, -c / h**2]
    rows.append(k.ravel())
    cols.append(k.ravel())
    vals.append(diag.ravel())
    M = sps.csr_array((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                      shape=(n, n))
    return CsrMatrix.from_scipy(M)


def conv_diff_2d(spec=None, **kwargs):
    """Discrete operator ``-(D1 u_x)_x - (D2 u_y)_y + Pe (v1 u_x + v2 u_y)``.

    Homogeneous Dirichlet conditions, velocity ``(x+y, x-y)``. Diffusion uses
    harmonic-mean face coefficients; convection is written as half the
    advective plus half the conservative form so that its central-difference
    matrix is exactly skew-symmetric.

    Either pass a :class:`ConvDiffSpec` or its fields as keywords, e.g.
    ``conv_diff_2d(nx=20, pe=100)``. Unknowns are ordered with ``y`` fastest.
    """
    if spec is None:
        spec = ConvDiffSpec(**kwargs)
    if spec.nx < 4:
        raise ValueError("nx must be at least 4")
    if spec.scale not in ("mesh", "physical"):
        raise ValueError(f"unknown scale {spec.scale!r}")
    A = _diffusion_part(spec)
    if spec.pe != 0:
        A = A + convection_part(spec)
    if spec.scale == "mesh":
        A = A * (1.0 / (spec.nx + 1)) ** 2
    return A


def tridiag(n, lower, diag, upper):
    """Constant-coefficient tridiagonal matrix."""
    M = sps.diags([lower * np.ones(n - 1), diag * np.ones(n), upper * np.ones(n - 1)],
                  [-1, 0, 1], format="csr")
    return CsrMatrix.from_scipy(M)


def diag_test(n, nonnormal=False, seed=0):
    """Diagonal matrix with entries evenly spaced in [-1, 1] and a random vector.

    With ``nonnormal=True`` the first superdiagonal is filled with ones.
    Returns ``(A, v)``; ``v`` has i.i.d. standard normal entries.
    """
    d = np.linspace(-1.0, 1.0, n)
    diagonals = [d]
    offsets = [0]
    if nonnormal:
        diagonals.append(np.ones(n - 1))
        offsets.append(1)
    A = CsrMatrix.from_scipy(sps.diags(diagonals, offsets, shape=(n, n), format="csr"))
    v = np.random.default_rng(seed).standard_normal(n)
    return A, v


def laplacian_3d_periodic(nx, h=1.0):
    """Second-order seven-point ``-Laplacian`` on a periodic ``nx^3`` grid.

    ``h=1`` (default) gives the stencil in mesh units, spectrum in [0, 12];
    pass ``h=1/nx`` for the unit cube. Unknowns are ordered with ``z``
    fastest. The matrix is symmetric positive semidefinite with the constant
    vector spanning its null space.
    """
    if nx < 4:
        raise ValueError("nx must be at least 4")
    one = sps.identity(nx, format="csr")
    e = np.ones(nx)
    L1 = sps.diags([-e[:-1], 2 * e, -e[:-1]], [-1, 0, 1], format="lil")
    L1[0, nx - 1] = -1.0
    L1[nx - 1, 0] = -1.0
    L1 = sps.csr_array(L1) / h**2
    A = (sps.kron(sps.kron(L1, one), one) + sps.kron(sps.kron(one, L1), one)
         + sps.kron(sps.kron(one, one), L1))
    return CsrMatrix.from_scipy(A)


def initial_vector(nx, a, normalize=True):
    """Samples of ``sin(2 pi x) sin(2 pi y) sin(2 pi z) + x(a-x) y(a-y) z(a-z)``.

    Nodes are ``x_i = i/nx``, ``i = 0..nx-1``, matching
    :func:`laplacian_3d_periodic`. For ``a=1`` the polynomial part extends
    periodically (continuously); for ``a=2`` it does not.
    """
    x = np.arange(nx) / nx
    X, Y, Z = np.meshgrid(x, x, x, indexing="ij")
    u = (np.sin(2 * np.pi * X) * np.sin(2 * np.pi * Y) * np.sin(2 * np.pi * Z)
         + X * (a - X) * Y * (a - Y) * Z * (a - Z)).ravel()
    if normalize:
        u = u / np.linalg.norm(u)
    return u


def default_v(n):
    """Normalized vector with equal entries."""
    return np.full(n, 1.0 / np.sqrt(n))


def write_matrix_market(A, path, comment=""):
    """Write an operator in Matrix Market coordinate format."""
    S = A.to_scipy() if isinstance(A, CsrMatrix) else sps.csr_array(A)
    scipy.io.mmwrite(str(path), sps.coo_matrix(S), comment=comment)


def read_matrix_market(path):
    """Read a square Matrix Market file into a :class:`CsrMatrix`."""
    M = scipy.io.mmread(str(path))
    if M.shape[0] != M.shape[1]:
        raise ValueError("matrix must be square")
    return CsrMatrix.from_scipy(sps.csr_array(M))
