"""Steady states via the concave dual functional.

The dual variables are a potential V >= 0 and a charge-normalization
shift sigma.  The objective

    Phi(V, sigma) = -1/2 ||grad V||^2 - Tr F(H_V + sigma) - sigma * Lambda

is strictly concave and coercive, so it has a unique maximizer; its
stationarity conditions are the self-consistent Poisson equation for V
and the charge constraint sum f(mu_k + sigma) = Lambda.  ``solve_steady``
finds the maximizer with a damped self-consistent field iteration whose
update direction is provably an ascent direction of Phi (the V-gradient
is n - AV and the step is A^-1 n - V, so their pairing is a positive
quadratic form), with the damping halved whenever a trial step fails to
increase Phi.  A plain backtracking ascent on the same gradient is kept
as an independent cross-check (opts.method = "ascent").
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .eos import EquationOfState, casimir_sum, f_many
from .errors import InfeasibleChargeError, NonConvergenceError
from .grid import GridSpec, grad_norm_sq, inner, laplacian_apply, poisson_solve
from .spectral import (Hamiltonian, SpectralData, eigensolve, kinetic_energy,
                       trace_f, trace_F, trace_tail)

__all__ = [
    "DualPoint",
    "SolverOptions",
    "SteadyState",
    "phi_eval",
    "phi_gradient",
    "solve_fermi_level",
    "solve_steady",
    "occupation_density",
    "energy_casimir_of",
]

_V_FLOOR = -1e-12
_FERMI_TOL = 1e-11
# roundoff allowance when enforcing monotone Phi: near the maximizer the
# achievable increase per step drops below float resolution of Phi itself
_PHI_SLACK = 1e-12


@dataclass(frozen=True)
class DualPoint:
    """A feasible dual iterate: nodewise V >= 0 (to roundoff) and sigma."""

    V: np.ndarray
    sigma: float

    def __post_init__(self):
        V = np.asarray(self.V, dtype=float)
        if V.min(initial=0.0) < _V_FLOOR:
            raise ValueError("potential component below the feasible floor")
        object.__setattr__(self, "V", V)
        object.__setattr__(self, "sigma", float(self.sigma))


@dataclass(frozen=True)
class SolverOptions:
    K: int | None = None
    tol_V: float = 1e-8
    tol_lambda: float = 1e-10
    max_iter: int = 500
    damping: float = 0.5
    min_damping: float = 1e-6
    method: str = "scf"
    tail_frac: float = 1e-8

    def __post_init__(self):
        if self.method not in ("scf", "ascent"):
            raise ValueError("method must be 'scf' or 'ascent'")
        if not (0.0 < self.damping <= 1.0):
            raise ValueError("damping must lie in (0, 1]")


@dataclass(frozen=True)
class SteadyState:
    """Converged steady state with its certificates.

    certificates keys: poisson_residual_inf, charge_residual, phi_value,
    hc_value, iterations, sigma0, tail_bound, eigen_residual_max,
    orthonormality_dev.
    """

    grid: GridSpec
    eos: EquationOfState
    Lambda: float
    sigma0: float
    V0: np.ndarray
    lambda0: np.ndarray
    spectral: SpectralData
    certificates: dict
    history: dict = field(repr=False, default_factory=dict)


def occupation_density(spectral: SpectralData, lam: np.ndarray) -> np.ndarray:
    """Number density sum_k lam_k |psi_k|^2 on the grid."""
    return (lam[:, None] * np.abs(spectral.psi) ** 2).sum(axis=0)


def phi_eval(point: DualPoint, eos: EquationOfState, Lambda: float,
             grid: GridSpec, K: int | None = None,
             spectral: SpectralData | None = None,
             tail_frac: float = 1e-8) -> float:
    """Value of the dual objective at a feasible point."""
    H = Hamiltonian(grid, point.V)
    if spectral is None:
        spectral = eigensolve(H, K)
    tr = trace_F(H, point.sigma, eos, K=spectral.K, spectral=spectral,
                 tail_frac=tail_frac)
    return -0.5 * grad_norm_sq(grid, point.V) - tr - point.sigma * Lambda


def phi_gradient(point: DualPoint, eos: EquationOfState, Lambda: float,
                 grid: GridSpec, K: int | None = None,
                 spectral: SpectralData | None = None):
    """Gradient of Phi in the h-weighted inner product.

    Returns (field, scalar): the field is n_{f,sigma} - (-Laplacian)V with
    the density built from first-order perturbation of the eigenvalues at
    frozen eigenfields; the scalar is sum_k f(mu_k + sigma) - Lambda.
    """
    H = Hamiltonian(grid, point.V)
    if spectral is None:
        spectral = eigensolve(H, K)
    lam = f_many(eos, spectral.mu + point.sigma)
    n = occupation_density(spectral, lam)
    g_V = n - laplacian_apply(grid, point.V)
    g_sigma = float(np.sum(lam)) - Lambda
    return g_V, g_sigma


def solve_fermi_level(H: Hamiltonian, eos: EquationOfState, Lambda: float,
                      K: int | None = None,
                      spectral: SpectralData | None = None,
                      tol: float = _FERMI_TOL,
                      tail_frac: float = 1e-8) -> float:
    """The shift sigma at which the truncated trace of f equals Lambda.

    sum_k f(mu_k + sigma) is strictly decreasing from +inf to 0, so the
    root exists for every Lambda > 0 and bisection on a doubling bracket
    finds it; the neglected-tail check runs once at the root.  Raises
    InfeasibleChargeError if the bracket cannot be established and
    TruncationError if modes beyond K would carry appreciable charge.
    """
    if not (Lambda > 0.0 and np.isfinite(Lambda)):
        raise ValueError(f"total charge must be positive, got {Lambda}")
    if spectral is None:
        spectral = eigensolve(H, K)
    mu = spectral.mu

    def charge(sig: float) -> float:
        return float(np.sum(f_many(eos, mu + sig)))

    if np.isfinite(eos.cutoff):
        hi = eos.cutoff - mu[0]
    else:
        hi = 1.0
        for _ in range(200):
            if charge(hi) < Lambda:
                break
            hi = 2.0 * max(hi, 1.0)
        else:
            raise InfeasibleChargeError("no shift brings the charge below Lambda")
    lo = hi - 1.0
    for _ in range(200):
        if charge(lo) >= Lambda:
            break
        lo = hi - 2.0 * (hi - lo)
    else:
        raise InfeasibleChargeError("no shift raises the charge to Lambda")
    for _ in range(300):
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        if charge(mid) >= Lambda:
            lo = mid
        else:
            hi = mid
        if hi - lo < 4e-16 * max(1.0, abs(mid)) and abs(charge(mid) - Lambda) <= tol:
            break
    sigma = 0.5 * (lo + hi)
    if abs(charge(sigma) - Lambda) > tol:
        raise NonConvergenceError(
            "fermi-level bisection stalled; charge misses Lambda by %.3e"
            % (charge(sigma) - Lambda))
    # validity of the truncation at the root (raises TruncationError)
    trace_f(H, sigma, eos, K=spectral.K, spectral=spectral, tail_frac=tail_frac)
    return sigma


def energy_casimir_of(grid: GridSpec, eos: EquationOfState,
                      spectral: SpectralData, lam: np.ndarray) -> float:
    """Energy-Casimir value of the ensemble (spectral rows, occupations)."""
    n = occupation_density(spectral, lam)
    Vn = poisson_solve(grid, n)
    kin = kinetic_energy(grid, spectral.psi)
    return casimir_sum(eos, lam) + float(lam @ kin) + 0.5 * grad_norm_sq(grid, Vn)


def _certificates(grid, eos, Lambda, sigma, V, spectral, lam, n, iterations):
    resid = float(np.max(np.abs(laplacian_apply(grid, V) - n)))
    charge = abs(float(np.sum(lam)) - Lambda)
    phi = phi_eval(DualPoint(V, sigma), eos, Lambda, grid, spectral=spectral)
    hc = energy_casimir_of(grid, eos, spectral, lam)
    return {
        "poisson_residual_inf": resid,
        "charge_residual": charge,
        "phi_value": phi,
        "hc_value": hc,
        "sigma0": sigma,
        "iterations": iterations,
        "tail_bound": trace_tail(grid, eos, sigma, spectral.K),
        "eigen_residual_max": spectral.residual_max,
        "orthonormality_dev": spectral.orthonormality_dev,
    }


def _finish(grid, eos, Lambda, sigma, V, spectral, history, iterations) -> SteadyState:
    lam = f_many(eos, spectral.mu + sigma)
    n = occupation_density(spectral, lam)
    certs = _certificates(grid, eos, Lambda, sigma, V, spectral, lam, n, iterations)
    spectral = replace(spectral, tail_bound=certs["tail_bound"])
    return SteadyState(grid=grid, eos=eos, Lambda=Lambda, sigma0=sigma,
                       V0=V, lambda0=lam, spectral=spectral,
                       certificates=certs, history=history)


def solve_steady(eos: EquationOfState, Lambda: float, grid: GridSpec,
                 opts: SolverOptions | None = None,
                 V_init: np.ndarray | None = None) -> SteadyState:
    """Maximize the dual objective; return the steady state it encodes.

    Starts from V = 0 (or ``V_init``), with sigma re-solved from the
    charge constraint at every visited potential so that the merit
    function is Phi(V, sigma(V)).  Raises NonConvergenceError with the
    iteration history attached when the tolerances cannot be met.
    """
    opts = opts or SolverOptions()
    if V_init is None:
        V = np.zeros(grid.N)
    else:
        V = np.asarray(V_init, dtype=float).copy()
        if V.shape != (grid.N,) or V.min(initial=0.0) < _V_FLOOR:
            raise ValueError("V_init must be a nonnegative field on the grid")
    K = opts.K if opts.K is not None else min(grid.N, 48)
    if opts.method == "ascent":
        return _solve_ascent(eos, Lambda, grid, opts, V, K)

    history = {"phi": [], "poisson_residual": [], "charge_residual": [],
               "damping": []}
    H = Hamiltonian(grid, V)
    spectral = eigensolve(H, K)
    sigma = solve_fermi_level(H, eos, Lambda, spectral=spectral,
                              tol=min(opts.tol_lambda, _FERMI_TOL),
                              tail_frac=opts.tail_frac)
    phi = phi_eval(DualPoint(V, sigma), eos, Lambda, grid, spectral=spectral,
                   tail_frac=opts.tail_frac)
    alpha = opts.damping

    for it in range(1, opts.max_iter + 1):
        lam = f_many(eos, spectral.mu + sigma)
        n = occupation_density(spectral, lam)
        resid = float(np.max(np.abs(laplacian_apply(grid, V) - n)))
        charge = abs(float(np.sum(lam)) - Lambda)
        history["phi"].append(phi)
        history["poisson_residual"].append(resid)
        history["charge_residual"].append(charge)
        history["damping"].append(alpha)
        if resid <= opts.tol_V and charge <= opts.tol_lambda:
            return _finish(grid, eos, Lambda, sigma, V, spectral, history, it)

        V_target = poisson_solve(grid, n)
        accepted = False
        while alpha >= opts.min_damping:
            V_cand = (1.0 - alpha) * V + alpha * V_target
            H_cand = Hamiltonian(grid, V_cand)
            spec_cand = eigensolve(H_cand, K)
            sig_cand = solve_fermi_level(H_cand, eos, Lambda, spectral=spec_cand,
                                         tol=min(opts.tol_lambda, _FERMI_TOL),
                                         tail_frac=opts.tail_frac)
            phi_cand = phi_eval(DualPoint(V_cand, sig_cand), eos, Lambda, grid,
                                spectral=spec_cand, tail_frac=opts.tail_frac)
            if phi_cand >= phi - _PHI_SLACK * (1.0 + abs(phi)):
                V, spectral, sigma, phi = V_cand, spec_cand, sig_cand, phi_cand
                accepted = True
                break
            alpha *= 0.5
        if not accepted:
            raise NonConvergenceError(
                "damping underflow: no step increases Phi (residual %.3e)" % resid,
                history=[history])
    raise NonConvergenceError(
        "steady-state iteration exhausted %d iterations (residual %.3e)"
        % (opts.max_iter, history["poisson_residual"][-1]),
        history=[history])


def _solve_ascent(eos, Lambda, grid, opts, V, K) -> SteadyState:
    """Backtracking gradient ascent on the reduced merit Phi(V, sigma(V)).

    The charge shift is re-solved exactly at every trial potential, so the
    merit sees only V; its gradient there is n - (-Laplacian)V and the
    Poisson-preconditioned direction pairs with it as a positive quadratic
    form, hence is an ascent direction.  Step sizes come from an Armijo
    backtracking rule (with a feasibility backtrack keeping V >= 0) instead
    of the damped fixed-point update, which makes this an independent
    cross-check of the self-consistent iteration.
    """
    history = {"phi": [], "poisson_residual": [], "charge_residual": [],
               "step": []}
    ftol = min(opts.tol_lambda, _FERMI_TOL)

    def at(V_):
        H_ = Hamiltonian(grid, V_)
        spec_ = eigensolve(H_, K)
        sig_ = solve_fermi_level(H_, eos, Lambda, spectral=spec_,
                                 tol=ftol, tail_frac=opts.tail_frac)
        phi_ = phi_eval(DualPoint(V_, sig_), eos, Lambda, grid,
                        spectral=spec_, tail_frac=opts.tail_frac)
        return spec_, sig_, phi_

    spectral, sigma, phi = at(V)
    for it in range(1, opts.max_iter + 1):
        lam = f_many(eos, spectral.mu + sigma)
        n = occupation_density(spectral, lam)
        g_V = n - laplacian_apply(grid, V)
        resid = float(np.max(np.abs(g_V)))
        charge = abs(float(np.sum(lam)) - Lambda)
        history["phi"].append(phi)
        history["poisson_residual"].append(resid)
        history["charge_residual"].append(charge)
        if resid <= opts.tol_V and charge <= opts.tol_lambda:
            return _finish(grid, eos, Lambda, sigma, V, spectral, history, it)
        d_V = poisson_solve(grid, g_V)
        slope = float(np.real(inner(grid, g_V, d_V)))
        t = 1.0
        accepted = False
        while t >= 1e-12:
            V_new = V + t * d_V
            if V_new.min(initial=0.0) < _V_FLOOR:
                t *= 0.5
                continue
            spec_new, sig_new, phi_new = at(V_new)
            if phi_new >= phi + 1e-4 * t * slope - _PHI_SLACK * (1.0 + abs(phi)):
                V, sigma, spectral, phi = V_new, sig_new, spec_new, phi_new
                accepted = True
                history["step"].append(t)
                break
            t *= 0.5
        if not accepted:
            raise NonConvergenceError(
                "ascent line search stalled (residual %.3e)" % resid,
                history=[history])
    raise NonConvergenceError(
        "ascent exhausted %d iterations (residual %.3e)"
        % (opts.max_iter, history["poisson_residual"][-1]),
        history=[history])
