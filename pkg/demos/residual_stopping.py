"""
Why stop on the ODE residual.

Runs restarted Arnoldi on a convection-diffusion operator with three
stopping rules and compares each to the true error. The stagnation rule
stops early; the generalized residual t*||r|| keeps iterating after the
answer is already good; the residual ||-Ay - y'|| sits in between.

    python demos/residual_stopping.py
"""

import numpy as np
import scipy.linalg as sla

from expres import conv_diff_2d, default_v, expv_restarted, relative_error


def main(nx=20, pe=100.0, t=2.0, tol=1e-5):
    A = conv_diff_2d(nx=nx, pe=pe)
    v = default_v(A.n)
    ref = sla.expm(-t * A.toarray()) @ v
    print(f"exp(-{t:g} A) v, conv-diff nx={nx} (n={A.n}), Pe={pe:g}, tol={tol:g}\n")
    print(f"{'criterion':<12} {'matvecs':>8} {'true error':>11}")
    for criterion in ("stagnation", "residual", "generalized"):
        r = expv_restarted(A, v, t, tol=tol, restart_len=20, criterion=criterion)
        print(f"{criterion:<12} {r.matvecs:>8} {relative_error(r.y, ref):>11.2e}")

    # the residual is not monotone: it plateaus until the Krylov space resolves
    # the convection, then drops quickly
    r = expv_restarted(A, v, t, tol=1e-10, restart_len=100)
    print("\nstep  residual   (every 20th step)")
    for h in r.history[19::20]:
        print(f"{h.iter:>4}  {h.residual_norm:.2e}")
    print(f"final error {relative_error(r.y, ref):.2e}")


if __name__ == "__main__":
    np.set_printoptions(precision=3)
    main()
