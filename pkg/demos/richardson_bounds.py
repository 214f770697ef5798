"""
Exponential Richardson iteration and its contraction bound.

For the splitting A = M - (M - A) the residual of one Richardson step is
multiplied by t (M - A) phi(-tM), which for moderate t is much smaller
than the linear-system factor (M - A) M^{-1}. The first part prints both
bounds for the 1D Laplacian with M = diag(A); the second runs the
iteration on a convection-diffusion problem.

    python demos/richardson_bounds.py
"""

import numpy as np
import scipy.linalg as sla

from expres import conv_diff_2d, default_v, exp_richardson, relative_error, tridiag
from expres.richardson import Preconditioner, richardson_contraction_bound


def bounds():
    A = tridiag(100, -1.0, 2.0, -1.0)
    M = Preconditioner.from_matrix(A, "diag").M
    ts = np.array([0.1, 0.5, 1.0, 2.0, 5.0])
    exp_b, lin = richardson_contraction_bound(A, M, ts)
    print("t     exp. Richardson   linear Richardson")
    for t, e in zip(ts, exp_b):
        print(f"{t:<5g} {e:>15.4f} {lin:>19.4f}")


def iteration(nx=40, pe=10.0):
    A = conv_diff_2d(nx=nx, pe=pe, jump=1.0)
    v = default_v(A.n)
    ref = sla.expm(-A.toarray()) @ v
    r = exp_richardson(A, v, 1.0, tol=1e-6)
    print(f"\nconv-diff nx={nx} Pe={pe:g}, M = tridiag(A)")
    print("it  max residual  residual at t_end")
    for h, end in zip(r.history, r.info["residual_t_end"]):
        print(f"{h.iter:>2}  {h.criterion:>12.2e}  {end:>17.2e}")
    print(f"{r.status} in {r.steps} iterations, error {relative_error(r.y, ref):.2e}, "
          f"{r.factorizations} LU factorizations, {r.solves} solves")


if __name__ == "__main__":
    bounds()
    iteration()
