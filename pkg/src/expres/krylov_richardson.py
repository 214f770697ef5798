"""
Krylov-Richardson restarting for ``exp(-tA) v``.

After a cycle the residual has rank one in time, ``r(t) = psi(t) w``. The
next cycle builds a Krylov basis ``V`` for ``w`` (plain or shift-and-invert)
and solves the small forced problem

    u' = -H u + psi(t) ||w|| e_1,   u(0) = 0,

so that ``y <- y + V u(t)``. The new residual is again rank one:

    plain:  psi_new(t) = -h_{m+1,m} [u(t)]_m,                  w_new = v_{m+1}
    SaI:    psi_new(t) = (ht_{m+1,m}/gamma) [Ht^{-1} u(t)]_m,  w_new = (I + gamma A) v_{m+1}

Projected matrices are not accumulated: every cycle works with ``m x m``
dense matrices only. Within a cycle the residual is monitored with cheap
projected solves; the accurate solve is done only for the update.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla
from numpy.polynomial import polynomial as P

from .arnoldi import KrylovDecomposition, arnoldi_extend, is_symmetric
from .linalg import MatvecCounter, as_csr, expm_dense, spmv
from .ode import integrate, integrate_polynomial_forcing
from .results import BUDGET_EXHAUSTED, CONVERGED, ExpvResult, HistoryEntry
from .sai import SaiDecomposition, back_transform, relaxed_inner_rtol, sai_extend

__all__ = [
    "ProjectedIvp",
    "PsiFit",
    "fit_psi",
    "solve_projected_ivp",
    "kr_expv",
    "constant_initial_guess",
    "InitialGuess",
]

PSI_FIT_DEGREE = 6
MAX_PSI_SAMPLES = 300
MONITOR_RTOL = 1e-2   # residual estimates to about 1% of their size


@dataclass
class PsiFit:
    """Least-squares polynomial for ``psi`` in the variable ``t / t_end``."""

    degree: int
    coefficients: np.ndarray
    fit_error: float
    accepted: bool
    t_end: float

    def __call__(self, t):
        return P.polyval(np.asarray(t, dtype=float) / self.t_end, self.coefficients)

    def coefficients_in_t(self):
        """Monomial coefficients in ``t`` itself."""
        return self.coefficients / self.t_end ** np.arange(self.degree + 1)


def fit_psi(ts, values, t_end, threshold, degree=PSI_FIT_DEGREE):
    """Fit ``psi`` samples; accepted when the max deviation is at most ``threshold``."""
    ts = np.asarray(ts, dtype=float)
    values = np.asarray(values, dtype=float)
    coef = P.polyfit(ts / t_end, values, degree)
    err = float(np.max(np.abs(P.polyval(ts / t_end, coef) - values)))
    return PsiFit(degree, coef, err, err <= threshold, float(t_end))


@dataclass
class ProjectedIvp:
    """``u' = -H u + psi(t) forcing_scale e_1``, ``u(0) = 0``.

    ``psi`` is a callable or an accepted :class:`PsiFit`, in which case the
    solution is obtained in closed form through phi-functions.
    """

    H: np.ndarray
    forcing_scale: float
    psi: object
    rtol: float = 1e-8
    atol: float = 1e-14


class _ClosedForm:
    """Exact solution for polynomial ``psi``; callable like an ODE solution."""

    def __init__(self, H, coeffs, scale, t_end):
        self.H = H
        self.coeffs = coeffs
        self.scale = scale
        self._t_end = t_end
        self.nsteps = 0
        self.y_end = integrate_polynomial_forcing(H, coeffs, scale, t_end)

    def __call__(self, t):
        return integrate_polynomial_forcing(self.H, self.coeffs, self.scale, t)

    def sample_times(self):
        return np.linspace(0.0, self._t_end, MAX_PSI_SAMPLES)


def solve_projected_ivp(ivp, t_end):
    """Solve a :class:`ProjectedIvp` on ``[0, t_end]``; returns a callable solution.

    The returned object has ``y_end`` and is callable at any ``t`` in
    ``[0, t_end]`` (scalar or array of times).
    """
    H = np.atleast_2d(np.asarray(ivp.H, dtype=float))
    m = H.shape[0]
    if isinstance(ivp.psi, PsiFit) and ivp.psi.accepted:
        return _ClosedForm(H, ivp.psi.coefficients_in_t(), ivp.forcing_scale, t_end)
    e1 = np.zeros(m)
    e1[0] = ivp.forcing_scale
    psi = ivp.psi

    def g(t):
        return psi(t) * e1

    return integrate(H, g, None, t_end, rtol=ivp.rtol, atol=ivp.atol)


def _sample_times(sol, t_end):
    """At most ``MAX_PSI_SAMPLES`` times: the solver's step times topped up uniformly."""
    ts = sol.sample_times() if hasattr(sol, "sample_times") else sol.ts
    if ts.size >= MAX_PSI_SAMPLES:
        return ts[np.linspace(0, ts.size - 1, MAX_PSI_SAMPLES).round().astype(int)]
    fill = np.linspace(0.0, t_end, MAX_PSI_SAMPLES - ts.size)
    return np.unique(np.concatenate([ts, fill]))


class _Psi:
    """``psi(t) = coef * z . u(t)`` for a projected solution ``u``."""

    def __init__(self, coef, z, u):
        self.coef = coef
        self.z = z
        self.u = u
        self._scalar = u.project(z) if hasattr(u, "project") else None

    def __call__(self, t):
        if self._scalar is not None:
            return self.coef * self._scalar(t)
        out = self.coef * (self.u(t) @ self.z)
        return float(out) if np.ndim(t) == 0 else out


class _ExactKrylovSolution:
    """``u(t) = beta exp(-tH) e_1`` (first cycle)."""

    def __init__(self, H, beta, t_end):
        self.H = H
        self.beta = beta
        self._t_end = t_end
        self.y_end = beta * expm_dense(H, t_end)[:, 0]

    def __call__(self, t):
        if np.ndim(t) == 0:
            return self.beta * expm_dense(self.H, t)[:, 0]
        return np.array([self.beta * expm_dense(self.H, s)[:, 0] for s in np.ravel(t)])

    def sample_times(self):
        return np.linspace(0.0, self._t_end, MAX_PSI_SAMPLES)


@dataclass
class InitialGuess:
    """Start ``y_0(t)`` with ``y_0(0) = v`` and residual ``psi(t) w``."""

    y_end: np.ndarray
    psi: object
    w: np.ndarray


def constant_initial_guess(A, v, counter=None):
    """``y_0(t) = v``: residual ``-Av``, i.e. ``psi = 1``, ``w = -Av``."""
    w = -spmv(A, v, counter)

    def psi(t):
        return 1.0 if np.ndim(t) == 0 else np.ones(np.shape(t))

    return InitialGuess(np.asarray(v, dtype=float).copy(), psi, w)


class _Space:
    """One cycle's Krylov space, plain or shift-and-invert."""

    def __init__(self, A, start, mode, gamma, inner, capacity, counter, symmetric):
        self.mode = mode
        self.counter = counter
        if mode == "plain":
            self.dec = KrylovDecomposition(start, capacity=capacity, symmetric=symmetric)
            self.A = A
        else:
            self.dec = SaiDecomposition(A, start, gamma, inner, capacity=capacity,
                                        counter=counter)
            self.gamma = gamma

    @property
    def k(self):
        return self.dec.k

    @property
    def V(self):
        return self.dec.V

    @property
    def exhausted(self):
        return self.dec.exhausted

    def extend(self, inner_rtol):
        if self.mode == "plain":
            arnoldi_extend(self.A, self.dec, 1, self.counter)
        else:
            sai_extend(None, self.dec, 1, inner_rtol)

    def projected(self):
        """Return ``(H, coef, z)`` with ``psi_new = coef * z . u``."""
        k = self.dec.k
        if self.mode == "plain":
            z = np.zeros(k)
            z[-1] = 1.0
            return self.dec.H.copy(), -self.dec.h_next, z
        H, lu = back_transform(self.dec.H_tilde, self.gamma)
        z = sla.lu_solve(lu, np.eye(k)[:, -1], trans=1)
        return H, self.dec.h_tilde_next / self.gamma, z

    def w(self):
        if self.mode == "plain":
            return self.dec.v_next.copy()
        return self.dec.w.copy()


def kr_expv(A, v, t_end, tol=1e-8, m=15, mode="plain", gamma=None, inner="lu", budget=5000,
            fit=True, initial_guess=None, counter=None, keep_cycles=False):
    """Krylov-Richardson approximation of ``exp(-t_end A) v``.

    Parameters
    ----------
    m : int
        Cycle length (Krylov steps per cycle).
    mode : {"plain", "sai"}
        Krylov operator ``A`` or ``(I + gamma A)^{-1}``.
    gamma : float, optional
        SaI shift, ``0.1 * t_end`` by default.
    inner : {"lu", "gmres"}
        SaI inner solver.
    budget : int
        Maximum number of Krylov steps over all cycles.
    fit : bool
        Try a degree-6 polynomial fit of ``psi`` each cycle; when accurate
        enough the projected problems are solved in closed form.
    initial_guess : InitialGuess, optional
        Start from ``y_0`` instead of running the first cycle on ``v``.
    keep_cycles : bool
        Store per-cycle data in ``info["cycles"]`` (for verification).

    Returns
    -------
    ExpvResult
        Stops when ``|psi(t_end)| ||w|| <= tol ||v||``. ``steps`` counts
        Krylov steps, ``matvecs`` products with ``A``, ``inner_work`` SaI
        inner work. ``info["cycles"]`` (with ``keep_cycles``) lists dicts with
        ``V``, ``H``, ``u`` (solution callable), ``psi_in``, ``w_norm_in``.
    """
    if m < 2:
        raise ValueError("cycle length must be at least 2")
    if tol <= 0:
        raise ValueError("tol must be positive")
    if mode not in ("plain", "sai"):
        raise ValueError(f"unknown mode {mode!r}")
    A = as_csr(A)
    counter = MatvecCounter() if counter is None else counter
    mv0, s0, f0 = counter.matvecs, counter.solves, counter.factorizations
    gamma = 0.1 * t_end if gamma is None else float(gamma)
    v = np.asarray(v, dtype=float)
    beta = float(np.linalg.norm(v))
    symmetric = mode == "plain" and is_symmetric(A)
    inner_solver = None
    if mode == "sai":
        from .sai import InnerSolver
        inner_solver = InnerSolver(A, gamma, inner, counter=counter)

    history = []
    cycles = []
    steps = 0
    res_rel = 1.0
    status = BUDGET_EXHAUSTED
    n_fits = 0

    def inner_work():
        return inner_solver.work if inner_solver is not None else 0

    if initial_guess is None:
        y = np.zeros_like(v)
        psi, w, first = None, v.copy(), True
    else:
        y = np.asarray(initial_guess.y_end, dtype=float).copy()
        psi, w, first = initial_guess.psi, np.asarray(initial_guess.w, dtype=float), False
        res_rel = abs(float(psi(t_end))) * float(np.linalg.norm(w)) / beta

    while steps < budget:
        w_norm = float(np.linalg.norm(w))
        if w_norm == 0.0:
            status = CONVERGED
            break
        space = _Space(A, w, mode, gamma, inner_solver, m, counter, symmetric)
        psi_used = psi
        if not first:
            ts = _sample_times(psi.u, t_end) if isinstance(psi, _Psi) else \
                np.linspace(0.0, t_end, MAX_PSI_SAMPLES)
            samples = np.asarray(psi(ts), dtype=float) * np.ones(ts.size)
            if fit:
                pf = fit_psi(ts, samples, t_end, 0.01 * tol * beta / w_norm)
                if pf.accepted:
                    psi_used = pf
                    n_fits += 1
            # accuracy of the update: 5% of tol relative to the size of u
            scale_u = max(float(np.max(np.abs(samples))) * w_norm * t_end,
                          np.finfo(float).tiny)
            rtol_full = float(np.clip(0.05 * tol * beta / scale_u, 1e-12, 1e-6))
        converged_here = False
        sol = None
        for _ in range(m):
            if steps >= budget:
                break
            space.extend(relaxed_inner_rtol(tol, res_rel))
            steps += 1
            H, coef, z = space.projected()
            if first:
                sol = _ExactKrylovSolution(H, w_norm, t_end)
                est = abs(coef * (z @ sol.y_end)) * np.linalg.norm(space.w()) / beta
            else:
                ivp = ProjectedIvp(H, w_norm, psi_used, rtol=MONITOR_RTOL,
                                   atol=1e-3 * tol * beta)
                mon = solve_projected_ivp(ivp, t_end)
                est = abs(coef * (z @ mon.y_end)) * np.linalg.norm(space.w()) / beta
            if space.exhausted:
                est = 0.0
            history.append(HistoryEntry(steps, counter.matvecs - mv0, est,
                                        inner_work=inner_work(), cycle=len(cycles)))
            if est <= tol:
                if first:
                    converged_here = True
                    break
                sol = solve_projected_ivp(
                    ProjectedIvp(H, w_norm, psi_used, rtol=rtol_full, atol=1e-3 * tol * beta),
                    t_end)
                est = abs(coef * (z @ sol.y_end)) * np.linalg.norm(space.w()) / beta
                if space.exhausted:
                    est = 0.0
                history[-1].residual_norm = history[-1].criterion = est
                if est <= tol:
                    converged_here = True
                    break
                sol = None
        H, coef, z = space.projected()
        if sol is None or sol.y_end.size != H.shape[0]:
            if first:
                sol = _ExactKrylovSolution(H, w_norm, t_end)
            else:
                sol = solve_projected_ivp(
                    ProjectedIvp(H, w_norm, psi_used, rtol=rtol_full, atol=1e-3 * tol * beta),
                    t_end)
        y = y + space.V @ sol.y_end
        w_new = space.w()
        psi_new = _Psi(coef, z, sol)
        res_rel = abs(psi_new(t_end)) * float(np.linalg.norm(w_new)) / beta
        if space.exhausted:
            res_rel = 0.0
        if history:
            history[-1].residual_norm = history[-1].criterion = res_rel
        if keep_cycles:
            cycles.append({"V": space.V.copy(), "H": H, "u": sol, "psi_in": psi_used,
                           "w_norm_in": w_norm, "first": first, "psi_out": psi_new,
                           "w_out": w_new})
        else:
            cycles.append(None)
        if converged_here or res_rel <= tol or space.exhausted:
            status = CONVERGED
            break
        psi, w, first = psi_new, w_new, False
    info = {"cycles": cycles if keep_cycles else len(cycles), "mode": mode, "m": m,
            "gamma": gamma if mode == "sai" else None, "polynomial_fits": n_fits}
    if inner_solver is not None:
        info["inner_per_step"] = list(inner_solver.per_call)
    return ExpvResult(y=y, status=status, history=history, matvecs=counter.matvecs - mv0,
                      inner_work=inner_work(), solves=counter.solves - s0,
                      factorizations=counter.factorizations - f0, steps=steps, info=info)
