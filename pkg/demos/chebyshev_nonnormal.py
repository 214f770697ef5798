"""
Chebyshev expansion on a nonnormal matrix: the residual knows when to stop.

The matrix has eigenvalues in [-1, 1] but a unit superdiagonal, so its
field of values sticks out of the expansion interval. Rounding errors in
the coefficients are amplified by ||U_k(X)|| and the iterates eventually
blow up. The residual reaches its floor at the same degree where the
error is smallest, so stopping on it returns the best iterate.

    python demos/chebyshev_nonnormal.py
"""

import numpy as np
import scipy.sparse.linalg as spla

from expres import cheb_expv, diag_test, relative_error


def main(n=10_000):
    A, v = diag_test(n, nonnormal=True)
    ref = spla.expm_multiply(-A.to_scipy(), v)
    errors = []
    full = cheb_expv(A, v, 1.0, tol=1e-300, N_max=60, check_interval=False,
                     callback=lambda k, y: errors.append(relative_error(y, ref)))
    print(" k   residual   true error")
    for h, e in zip(full.history, errors):
        if h.iter % 5 == 0 or h.iter < 4:
            print(f"{h.iter:>2}   {h.residual_norm:.2e}   {e:.2e}")
    stop = cheb_expv(A, v, 1.0, tol=1e-8, check_interval=False)
    print(f"\nresidual stop (tol 1e-8) at k={stop.steps}, "
          f"error {relative_error(stop.y, ref):.2e}; "
          f"error minimum at k={int(np.argmin(errors)) + 1}")


if __name__ == "__main__":
    main()
