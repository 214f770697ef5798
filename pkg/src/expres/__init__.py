"""Matrix exponential action ``exp(-tA) v`` with ODE-residual control.

Every approximation ``y_k(t)`` of ``y' = -Ay``, ``y(0) = v`` is judged by its
residual ``r_k(t) = -A y_k(t) - y_k'(t)``. The package provides Arnoldi and
shift-and-invert Krylov methods, a Chebyshev expansion, exponential
Richardson iteration and Krylov-Richardson restarting, all stopping on that
residual.
"""

from .arnoldi import (KrylovDecomposition, ScalarResidualFunction, arnoldi_extend,
                      continued_error_estimate, eval_y, eval_y_prime, expv_restarted,
                      generalized_residual_norm, residual)
from .chebyshev import cheb_coeffs, cheb_coeffs_bessel, cheb_expv
from .krylov_richardson import (ProjectedIvp, PsiFit, constant_initial_guess, kr_expv,
                                solve_projected_ivp)
from .linalg import (CsrMatrix, DivergenceError, MatvecCounter, NonConvergenceError,
                     SingularMatrixError, expm_dense, gmres, phi_chain, sparse_lu, spmv)
from .ode import StiffIntegrationError, integrate, integrate_polynomial_forcing
from .problems import (conv_diff_2d, default_v, diag_test, initial_vector,
                       laplacian_3d_periodic, read_matrix_market, tridiag, write_matrix_market)
from .results import (BUDGET_EXHAUSTED, CONVERGED, DIVERGED, ExpvResult, HistoryEntry,
                      relative_error)
from .richardson import (SampledVectorFunction, exp_richardson, phi_error_bound,
                         richardson_contraction_bound)
from .sai import sai_expv

__version__ = "0.1.0"

__all__ = [
    "BUDGET_EXHAUSTED", "CONVERGED", "CsrMatrix", "DIVERGED", "DivergenceError", "ExpvResult",
    "HistoryEntry", "KrylovDecomposition", "MatvecCounter", "NonConvergenceError",
    "ProjectedIvp", "PsiFit", "SampledVectorFunction", "ScalarResidualFunction",
    "SingularMatrixError", "StiffIntegrationError", "arnoldi_extend", "cheb_coeffs",
    "cheb_coeffs_bessel", "cheb_expv", "constant_initial_guess", "continued_error_estimate",
    "conv_diff_2d", "default_v", "diag_test", "eval_y", "eval_y_prime", "exp_richardson",
    "expm_dense", "expv_restarted", "generalized_residual_norm", "gmres", "initial_vector",
    "integrate", "integrate_polynomial_forcing", "kr_expv", "laplacian_3d_periodic",
    "phi_chain", "phi_error_bound", "read_matrix_market", "relative_error", "residual",
    "richardson_contraction_bound", "sai_expv", "solve_projected_ivp", "sparse_lu", "spmv",
    "tridiag", "write_matrix_market",
]
