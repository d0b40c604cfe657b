"""Numerical audits of the stability estimates.

Three checks, all pure evaluations:

* ``stability_audit``: along an evolution trace, the squared gradient
  distance to the steady potential must stay below the conserved excess
  d(t) <= B := H_C(initial) - H_C(steady) up to an audit tolerance that
  absorbs time-discretization drift.  The energy-Casimir functional here
  must be the one built from the steady state's own charge normalization,
  i.e. the occupation profile shifted by its fermi level; with that
  profile the steady state is the unconstrained minimizer and B >= 0 for
  every admissible initial datum.
* ``trace_inequality_check``: the conjugate-sum/kinetic lower bound on
  ensembles versus the negative trace of F, with equality exactly at the
  ensemble assembled from the potential's own eigenpairs and occupations.
* ``jensen_check``: convexity of F pushed through a normalized state's
  energy expectation, with equality on eigenstates.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .eos import EquationOfState, F_eval, F_many, casimir_sum, f_many, shifted
from .errors import AuditError
from .evolution import EnsembleState, EvolutionTrace, ensemble_from_steady, evolve, perturb
from .grid import GridSpec
from .spectral import Hamiltonian, apply_hamiltonian, eigensolve, trace_F
from .steady import SteadyState, energy_casimir_of

__all__ = [
    "StabilityReport",
    "stability_audit",
    "trace_inequality_check",
    "jensen_check",
    "haar_unitary",
    "random_ensemble",
    "run_stability_experiment",
]

_TOL_AUDIT = 1e-6


@dataclass(frozen=True)
class StabilityReport:
    """Outcome of one trajectory audit against its steady state."""

    bound: float
    t: np.ndarray
    dist: np.ndarray
    margin: float
    violations: list = field(default_factory=list)
    tol_audit: float = _TOL_AUDIT
    hc_drift: float = 0.0
    perturb_kind: str | None = None
    perturb_eps: float | None = None
    seed: int | None = None

    @property
    def passed(self) -> bool:
        return not self.violations

    @property
    def drift_residual_allowance(self) -> float:
        """Part of the audit tolerance not consumed by measured drift."""
        return self.tol_audit - self.hc_drift

    def to_dict(self) -> dict:
        return {
            "bound": self.bound,
            "margin": self.margin,
            "passed": self.passed,
            "tol_audit": self.tol_audit,
            "hc_drift": self.hc_drift,
            "drift_residual_allowance": self.drift_residual_allowance,
            "n_samples": int(self.t.size),
            "t_final": float(self.t[-1]) if self.t.size else 0.0,
            "max_dist": float(np.max(self.dist)) if self.dist.size else 0.0,
            "violations": [{"t": float(t), "excess": float(e)}
                           for t, e in self.violations],
            "perturb_kind": self.perturb_kind,
            "perturb_eps": self.perturb_eps,
            "seed": self.seed,
        }


def stability_audit(trace: EvolutionTrace, steady: SteadyState,
                    tol_audit: float = _TOL_AUDIT,
                    perturb_kind: str | None = None,
                    perturb_eps: float | None = None,
                    seed: int | None = None) -> StabilityReport:
    """Audit d(t) <= B + tol along a trace produced against ``steady``.

    The trace must carry the gradient-distance series (evolve with
    ``reference_V=steady.V0``) and its energy-Casimir series must use the
    steady state's shifted occupation profile; both are checked.  B is
    computed once from the t = 0 sample.
    """
    if trace.grid != steady.grid:
        raise AuditError("trace and steady state use different grids")
    eos_sh = shifted(steady.eos, steady.sigma0)
    if trace.eos != eos_sh:
        raise AuditError(
            "trace energy-Casimir series does not use the steady state's "
            "shifted occupation profile")
    if trace.dist is None:
        raise AuditError("trace carries no gradient-distance series; "
                         "evolve with reference_V=steady.V0")
    hc_steady = energy_casimir_of(steady.grid, eos_sh, steady.spectral,
                                  steady.lambda0)
    B = float(trace.H_C[0] - hc_steady)
    dist = np.asarray(trace.dist, dtype=float)
    t = np.asarray(trace.t, dtype=float)
    excess = dist - (B + tol_audit)
    bad = np.nonzero(excess > 0.0)[0]
    violations = [(float(t[i]), float(excess[i])) for i in bad]
    margin = float(np.min(B - dist)) if dist.size else 0.0
    hc_drift = float(np.max(np.abs(trace.H_C - trace.H_C[0])))
    return StabilityReport(bound=B, t=t, dist=dist, margin=margin,
                           violations=violations, tol_audit=tol_audit,
                           hc_drift=hc_drift, perturb_kind=perturb_kind,
                           perturb_eps=perturb_eps, seed=seed)


def trace_inequality_check(state: EnsembleState, V: np.ndarray,
                           eos: EquationOfState, grid: GridSpec,
                           K: int | None = None):
    """Conjugate-plus-kinetic sum versus the negative F-trace.

    lhs = sum_k [F*(-lam_k) + lam_k <psi_k, H_V psi_k>], rhs = -Tr F(H_V)
    truncated to K modes.  Since F >= 0 the truncated rhs is an upper
    bound for the full one, so a nonnegative margin certifies the full
    inequality; for ensembles spanned by the lowest K eigenfields the
    truncated statement is itself exact.  Returns (lhs, rhs, margin).
    """
    V = np.asarray(V, dtype=float)
    if V.min(initial=0.0) < -1e-12:
        raise ValueError("potential must be nonnegative")
    H = Hamiltonian(grid, V)
    Hpsi = apply_hamiltonian(H, state.psi)
    quad = grid.h * np.real(np.einsum("kn,kn->k", state.psi.conj(), Hpsi))
    lhs = casimir_sum(eos, state.lam) + float(state.lam @ quad)
    rhs = -trace_F(H, 0.0, eos, K=K)
    return lhs, rhs, lhs - rhs


def jensen_check(psi: np.ndarray, V: np.ndarray, eos: EquationOfState,
                 grid: GridSpec, K: int | None = None):
    """F at the energy expectation versus the expectation of F.

    Returns (lhs, rhs) with lhs = F(<psi, H psi>) and rhs the spectral
    expectation sum_k F(mu_k) |<psi_k, psi>|^2 over K modes.  Dropped
    modes only lower rhs (F >= 0), so lhs <= rhs certified on the
    truncation implies the full inequality; it is exact when psi lies in
    the span of the computed modes.
    """
    psi = np.asarray(psi, dtype=complex)
    V = np.asarray(V, dtype=float)
    if V.min(initial=0.0) < -1e-12:
        raise ValueError("potential must be nonnegative")
    nrm = np.sqrt(grid.h) * np.linalg.norm(psi)
    if abs(nrm - 1.0) > 1e-8:
        raise ValueError(f"state must be normalized, got norm {nrm!r}")
    H = Hamiltonian(grid, V)
    s = float(np.real(grid.h * np.vdot(psi, apply_hamiltonian(H, psi))))
    lhs = F_eval(eos, s)
    spectral = eigensolve(H, K)
    coef = grid.h * (spectral.psi @ psi)
    weights = np.abs(coef) ** 2
    rhs = float(F_many(eos, spectral.mu) @ weights)
    return lhs, rhs


def haar_unitary(K: int, rng: np.random.Generator) -> np.ndarray:
    """Haar-distributed K x K unitary via QR of a complex Gaussian matrix."""
    Z = (rng.standard_normal((K, K)) + 1j * rng.standard_normal((K, K)))
    Q, R = np.linalg.qr(Z)
    d = np.diagonal(R)
    return Q * (d / np.abs(d))


def random_ensemble(grid: GridSpec, V: np.ndarray, eos: EquationOfState,
                    K: int, rng: np.random.Generator,
                    Lambda: float | None = None) -> EnsembleState:
    """Random admissible ensemble spanned by the lowest K eigenfields.

    Fields are a Haar-random unitary mix of the eigenfields; occupations
    are drawn from the occupation profile at per-mode random shifts (hence
    automatically admissible) and optionally rescaled to total Lambda.
    """
    spectral = eigensolve(Hamiltonian(grid, V), K)
    U = haar_unitary(K, rng)
    psi = U @ spectral.psi.astype(complex)
    s = rng.uniform(-1.0, 3.0, size=K)
    lam = f_many(eos, spectral.mu + s)
    if Lambda is not None:
        total = float(lam.sum())
        if total > 0.0:
            lam = lam * (Lambda / total)
    return EnsembleState(psi=psi, lam=lam, t=0.0)


def run_stability_experiment(steady: SteadyState, kind: str, eps: float,
                             dt: float = 1e-3, T: float = 10.0,
                             sample_every: int = 100,
                             midpoint_sweeps: int = 2,
                             seed: int | None = None, buffer: int = 4,
                             tol_audit: float = _TOL_AUDIT,
                             snapshots: bool = False):
    """Perturb, propagate, audit; returns (trace, report).

    The trace is produced with the steady state's shifted occupation
    profile and its potential as reference, which is exactly what
    ``stability_audit`` requires.
    """
    state = perturb(steady, kind, eps, seed=seed, buffer=buffer)
    eos_sh = shifted(steady.eos, steady.sigma0)
    trace = evolve(state, steady.grid, eos_sh, dt=dt, T=T,
                   sample_every=sample_every, midpoint_sweeps=midpoint_sweeps,
                   reference_V=steady.V0, snapshots=snapshots)
    report = stability_audit(trace, steady, tol_audit=tol_audit,
                             perturb_kind=kind, perturb_eps=eps, seed=seed)
    return trace, report
