"""Time integration of the coupled Schrodinger-Poisson ensemble.

All tracked fields evolve under one common potential sourced by their own
occupation-weighted density.  Each step is a Crank-Nicolson (Cayley) solve
with the potential frozen at a self-consistent midpoint value: a predictor
advances the ensemble half a step with the current potential to estimate
the midpoint density, then a configurable number of fixed-point sweeps
replace the midpoint potential by the one generated by the averaged
density of the two endpoints.  Because the final update is a Cayley
transform of a Hermitian operator, it is exactly unitary in exact
arithmetic: per-state mass and mutual orthonormality are conserved to
solver roundoff, while energy and energy-Casimir drift at second order
in the step size.

Perturbation generators for stability experiments live here as well;
each maps a converged steady state to a nearby admissible ensemble.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import solve_banded

from .eos import EquationOfState, casimir_sum, f_many
from .errors import ConfigError, NumericalError
from .grid import GridSpec, grad_norm_sq, poisson_solve
from .spectral import Hamiltonian, apply_hamiltonian, eigensolve, kinetic_energy
from .steady import SteadyState

__all__ = [
    "EnsembleState",
    "EvolutionTrace",
    "density",
    "potential",
    "energy",
    "energy_casimir",
    "cn_apply",
    "step",
    "evolve",
    "ensemble_from_steady",
    "perturb",
]

_ORTH_FLAG = 1e-8


@dataclass(frozen=True)
class EnsembleState:
    """Finitely many orthonormal complex fields with occupations.

    psi has one row per tracked state; untracked states are understood to
    carry zero occupation.  Orthonormality is a soft invariant: it is
    checked to 1e-8 where consumed, not enforced by construction.
    """

    psi: np.ndarray
    lam: np.ndarray
    t: float = 0.0

    def __post_init__(self):
        psi = np.ascontiguousarray(np.asarray(self.psi, dtype=complex))
        lam = np.asarray(self.lam, dtype=float)
        if psi.ndim != 2:
            raise ValueError("psi must be a (K, N) row stack")
        if lam.shape != (psi.shape[0],):
            raise ValueError("lam must hold one occupation per row of psi")
        if lam.min(initial=0.0) < 0.0:
            raise ValueError("occupations must be nonnegative")
        object.__setattr__(self, "psi", psi)
        object.__setattr__(self, "lam", lam)
        object.__setattr__(self, "t", float(self.t))

    @property
    def K(self) -> int:
        return self.psi.shape[0]


@dataclass(frozen=True)
class EvolutionTrace:
    """Sampled diagnostics of one evolution run.

    dist is the squared gradient distance to the reference potential,
    1/2 * ||grad V(t) - grad V0||^2, present only when a reference steady
    state was supplied.  orth_flagged reports whether orthonormality drift
    ever exceeded 1e-8; the run records the excursion rather than silently
    re-orthonormalizing.
    """

    grid: GridSpec
    eos: EquationOfState
    t: np.ndarray
    mass_dev: np.ndarray
    orth_dev: np.ndarray
    H: np.ndarray
    H_C: np.ndarray
    dist: np.ndarray | None = None
    V_snapshots: np.ndarray | None = field(repr=False, default=None)
    final_state: EnsembleState | None = field(repr=False, default=None)

    @property
    def orth_flagged(self) -> bool:
        return bool(np.max(self.orth_dev) > _ORTH_FLAG)


def density(state: EnsembleState, grid: GridSpec) -> np.ndarray:
    """Occupation-weighted number density on the grid nodes."""
    if state.psi.shape[1] != grid.N:
        raise ValueError("state and grid sizes disagree")
    return (state.lam[:, None] * np.abs(state.psi) ** 2).sum(axis=0)


def potential(state: EnsembleState, grid: GridSpec) -> np.ndarray:
    """Self-consistent potential generated by the state's own density."""
    return poisson_solve(grid, density(state, grid))


def energy(state: EnsembleState, grid: GridSpec) -> float:
    """Kinetic part plus field energy of the self-consistent potential."""
    V = potential(state, grid)
    kin = kinetic_energy(grid, state.psi)
    return float(state.lam @ kin) + 0.5 * grad_norm_sq(grid, V)


def energy_casimir(state: EnsembleState, grid: GridSpec,
                   eos: EquationOfState) -> float:
    """Conserved energy-Casimir value: conjugate sum plus energy."""
    return casimir_sum(eos, state.lam) + energy(state, grid)


def _orth_deviation(state: EnsembleState, grid: GridSpec) -> float:
    G = grid.h * (state.psi.conj() @ state.psi.T)
    return float(np.max(np.abs(G - np.eye(state.K))))


def _mass_deviation(state: EnsembleState, grid: GridSpec) -> float:
    norms = np.sqrt(grid.h) * np.linalg.norm(state.psi, axis=1)
    return float(np.max(np.abs(norms - 1.0))) if state.K else 0.0


def cn_apply(grid: GridSpec, V: np.ndarray, psi: np.ndarray,
             dt: float) -> np.ndarray:
    """One Cayley update (I + i dt/2 H_V)^-1 (I - i dt/2 H_V) on row stacks.

    The resolvent solve is a complex tridiagonal banded solve shared by all
    rows.  Exactly unitary for real V in exact arithmetic.
    """
    H = Hamiltonian(grid, V)
    z = 0.5j * dt
    rhs = (psi - z * apply_hamiltonian(H, psi)).T
    ab = np.zeros((3, grid.N), dtype=complex)
    ab[0, 1:] = z * H.offdiagonal
    ab[1, :] = 1.0 + z * H.diagonal
    ab[2, :-1] = z * H.offdiagonal
    try:
        out = solve_banded((1, 1), ab, rhs, overwrite_ab=True,
                           overwrite_b=True, check_finite=False)
    except Exception as exc:
        raise NumericalError(f"Crank-Nicolson tridiagonal solve failed: {exc}")
    if not np.all(np.isfinite(out)):
        raise NumericalError("Crank-Nicolson solve produced non-finite values")
    return np.ascontiguousarray(out.T)


def step(state: EnsembleState, dt: float, grid: GridSpec,
         midpoint_sweeps: int = 2) -> EnsembleState:
    """Advance the ensemble by dt with a self-consistent midpoint potential.

    Predictor: half-step with the current potential frozen, giving a
    midpoint density estimate.  Each sweep then applies the full Cayley
    step with the current midpoint potential and refreshes that potential
    from the average of the endpoint densities; the state returned is the
    one advanced with the final midpoint potential.
    """
    if not (dt != 0.0 and np.isfinite(dt)):
        raise ValueError("dt must be nonzero and finite")
    if midpoint_sweeps < 1:
        raise ValueError("midpoint_sweeps must be at least 1")
    n0 = density(state, grid)
    V0 = poisson_solve(grid, n0)
    psi_half = cn_apply(grid, V0, state.psi, 0.5 * dt)
    half = EnsembleState(psi=psi_half, lam=state.lam, t=state.t)
    V_mid = poisson_solve(grid, density(half, grid))
    psi_new = state.psi
    for sweep in range(midpoint_sweeps):
        psi_new = cn_apply(grid, V_mid, state.psi, dt)
        if sweep + 1 < midpoint_sweeps:
            n_new = (state.lam[:, None] * np.abs(psi_new) ** 2).sum(axis=0)
            V_mid = poisson_solve(grid, 0.5 * (n0 + n_new))
    return EnsembleState(psi=psi_new, lam=state.lam, t=state.t + dt)


def evolve(state: EnsembleState, grid: GridSpec, eos: EquationOfState,
           dt: float, T: float, sample_every: int = 10,
           midpoint_sweeps: int = 2, reference_V: np.ndarray | None = None,
           snapshots: bool = False, keep_final: bool = True) -> EvolutionTrace:
    """Propagate to time T, sampling conserved-quantity diagnostics.

    Samples are taken at t = 0, every ``sample_every`` steps, and at the
    final step.  When ``reference_V`` is given, each sample also records
    the squared gradient distance 1/2 ||grad V(t) - grad V0||^2.  The eos
    enters only through the recorded energy-Casimir values; callers
    auditing a steady state should pass that state's shifted profile so
    the recorded series matches the conserved functional of its own
    normalization.
    """
    if dt <= 0.0 or T <= 0.0:
        raise ValueError("dt and T must be positive")
    if sample_every < 1:
        raise ValueError("sample_every must be at least 1")
    n_steps = int(round(T / dt))
    if abs(n_steps * dt - T) > 1e-9 * max(1.0, T):
        raise ValueError("T must be an integer multiple of dt")
    ts, mass, orth, Hs, HCs, dists, snaps = [], [], [], [], [], [], []

    def record(s: EnsembleState):
        ts.append(s.t)
        mass.append(_mass_deviation(s, grid))
        orth.append(_orth_deviation(s, grid))
        Hs.append(energy(s, grid))
        HCs.append(energy_casimir(s, grid, eos))
        if reference_V is not None:
            dists.append(0.5 * grad_norm_sq(grid, potential(s, grid) - reference_V))
        if snapshots:
            snaps.append(potential(s, grid))

    record(state)
    current = state
    for i in range(1, n_steps + 1):
        current = step(current, dt, grid, midpoint_sweeps=midpoint_sweeps)
        current = EnsembleState(psi=current.psi, lam=current.lam, t=i * dt)
        if i % sample_every == 0 or i == n_steps:
            record(current)
    return EvolutionTrace(
        grid=grid, eos=eos, t=np.asarray(ts), mass_dev=np.asarray(mass),
        orth_dev=np.asarray(orth), H=np.asarray(Hs), H_C=np.asarray(HCs),
        dist=np.asarray(dists) if reference_V is not None else None,
        V_snapshots=np.asarray(snaps) if snapshots else None,
        final_state=current if keep_final else None)


def ensemble_from_steady(steady: SteadyState, buffer: int = 4) -> EnsembleState:
    """Tracked ensemble of a steady state, padded with near-empty modes.

    Re-solves the spectrum of H_{V0} with ``buffer`` extra modes so mixing
    perturbations have headroom; occupations follow the steady profile on
    every tracked mode (exactly zero beyond a finite cutoff, negligible
    for rapidly decaying profiles).
    """
    grid = steady.grid
    K = min(grid.N, steady.spectral.K + buffer)
    spectral = eigensolve(Hamiltonian(grid, steady.V0), K)
    lam = f_many(steady.eos, spectral.mu + steady.sigma0)
    return EnsembleState(psi=spectral.psi.astype(complex), lam=lam, t=0.0)


def _cayley_orthogonal(K: int, eps: float, rng: np.random.Generator) -> np.ndarray:
    S = rng.standard_normal((K, K))
    A = 0.5 * eps * (S - S.T)
    I = np.eye(K)
    return np.linalg.solve(I + A, I - A)


def perturb(steady: SteadyState, kind: str, eps: float,
            seed: int | None = None, buffer: int = 4) -> EnsembleState:
    """Admissible perturbation of a steady ensemble.

    kinds: "phase" multiplies every field by a common unit-modulus factor
    exp(i eps g) with g(x) = sin(2 pi x / L), leaving the density exactly
    unchanged at t = 0; "occupation" rescales each occupation by
    1 + eps r_k with r_k uniform in [-1, 1], clipped at zero; "mix"
    rotates the fields by a real orthogonal Cayley transform of an eps-
    scaled antisymmetric Gaussian seed, preserving orthonormality and the
    total charge to roundoff.
    """
    if eps < 0.0 or not np.isfinite(eps):
        raise ValueError("perturbation amplitude must be nonnegative")
    base = ensemble_from_steady(steady, buffer=buffer)
    if kind == "phase":
        g = np.sin(2.0 * np.pi * steady.grid.x / steady.grid.L)
        return EnsembleState(psi=np.exp(1j * eps * g) * base.psi,
                             lam=base.lam, t=0.0)
    if kind == "occupation":
        rng = np.random.default_rng(seed)
        r = rng.uniform(-1.0, 1.0, size=base.K)
        return EnsembleState(psi=base.psi,
                             lam=np.maximum(base.lam * (1.0 + eps * r), 0.0),
                             t=0.0)
    if kind == "mix":
        rng = np.random.default_rng(seed)
        U = _cayley_orthogonal(base.K, eps, rng)
        return EnsembleState(psi=U @ base.psi, lam=base.lam, t=0.0)
    raise ConfigError(f"unknown perturbation kind: {kind!r}")
