"""Discrete Hamiltonians H = -Laplacian + V and their low-lying spectra.

Eigenpairs come from LAPACK's tridiagonal bisection + inverse-iteration
path, which is deterministic for a fixed matrix; a fixed sign convention
(first appreciable component positive) makes eigenvectors reproducible
across runs.  Truncated traces of f(H + sigma) and F(H + sigma) carry an
upper bound on the neglected mass, computed from the exact free-operator
spectrum: V >= 0 pushes every eigenvalue up, and f, F are decreasing, so
evaluating them on the free eigenvalues overestimates the tail.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import eigh_tridiagonal

from .eos import EquationOfState, F_many, f_many
from .errors import DegenerateSpectrumError, NumericalError, TruncationError
from .grid import GridSpec, laplacian_apply, grad_norm_sq

__all__ = [
    "Hamiltonian",
    "SpectralData",
    "eigensolve",
    "trace_F",
    "trace_f",
    "trace_tail",
    "apply_hamiltonian",
]

_V_FLOOR = -1e-12
_RESID_TOL = 1e-9
_ORTHO_TOL = 1e-10
_GAP_TOL = 1e-10
_TAIL_FRAC = 1e-8


@dataclass(frozen=True)
class Hamiltonian:
    """Schroedinger operator -Laplacian + V on a Dirichlet grid."""

    grid: GridSpec
    V: np.ndarray

    def __post_init__(self):
        V = np.asarray(self.V, dtype=float)
        if V.shape != (self.grid.N,):
            raise ValueError(f"potential has shape {V.shape}, expected ({self.grid.N},)")
        if V.min(initial=0.0) < _V_FLOOR:
            raise ValueError(
                "potential dips to %.3e below zero; the model requires V >= 0"
                % V.min())
        object.__setattr__(self, "V", V)

    @property
    def diagonal(self) -> np.ndarray:
        return 2.0 / self.grid.h**2 + self.V

    @property
    def offdiagonal(self) -> np.ndarray:
        return np.full(self.grid.N - 1, -1.0 / self.grid.h**2)


def apply_hamiltonian(H: Hamiltonian, psi: np.ndarray) -> np.ndarray:
    """Matrix-free H psi for a field or a stack of row fields."""
    psi = np.asarray(psi)
    if psi.ndim == 1:
        return laplacian_apply(H.grid, psi) + H.V * psi
    out = 2.0 * psi
    out[:, 1:] -= psi[:, :-1]
    out[:, :-1] -= psi[:, 1:]
    return out / H.grid.h**2 + H.V[None, :] * psi


@dataclass(frozen=True)
class SpectralData:
    """Lowest K eigenpairs of a Hamiltonian, h-orthonormal rows in psi.

    ``tail_bound`` is the upper bound on the neglected mass of the trace
    of F; it is NaN until a solver that knows the profile fills it in.
    """

    K: int
    mu: np.ndarray
    psi: np.ndarray
    residual_max: float
    orthonormality_dev: float
    tail_bound: float = float("nan")


def _check_gaps(mu: np.ndarray) -> None:
    gaps = np.diff(mu)
    bad = gaps <= _GAP_TOL * (1.0 + np.abs(mu[1:]))
    if np.any(bad):
        k = int(np.argmax(bad))
        raise DegenerateSpectrumError(
            "eigenvalues %d and %d are separated by only %.3e; "
            "mode ordering is unreliable" % (k + 1, k + 2, gaps[k]))


def eigensolve(H: Hamiltonian, K: int | None = None) -> SpectralData:
    """Lowest K eigenpairs, h-orthonormalized and sign-fixed.

    K defaults to min(N, 48).  Raises if the computed pairs miss the
    residual or orthonormality contracts, or if adjacent eigenvalues are
    too close to order reliably.
    """
    grid = H.grid
    if K is None:
        K = min(grid.N, 48)
    if not 1 <= K <= grid.N:
        raise ValueError(f"K must lie in 1..{grid.N}, got {K}")
    mu, vecs = eigh_tridiagonal(
        H.diagonal, H.offdiagonal, select="i", select_range=(0, K - 1))
    psi = vecs.T / np.sqrt(grid.h)
    # sign convention: first component that is not negligible is positive
    for k in range(K):
        row = psi[k]
        idx = np.flatnonzero(np.abs(row) > 1e-8 * np.max(np.abs(row)))[0]
        if row[idx] < 0.0:
            psi[k] = -row
    _check_gaps(mu)
    res = apply_hamiltonian(H, psi) - mu[:, None] * psi
    residual_max = float(np.sqrt(grid.h) * np.max(np.linalg.norm(res, axis=1)))
    worst_allowed = _RESID_TOL * float(np.max(1.0 + np.abs(mu)))
    if residual_max > worst_allowed:
        raise NumericalError(
            "eigenpair residual %.3e exceeds %.3e" % (residual_max, worst_allowed))
    gram = grid.h * (psi @ psi.T)
    dev = float(np.max(np.abs(gram - np.eye(K))))
    if dev > _ORTHO_TOL:
        raise NumericalError("eigenvector orthonormality off by %.3e" % dev)
    return SpectralData(K=K, mu=mu, psi=psi,
                        residual_max=residual_max, orthonormality_dev=dev)


def kinetic_energy(grid: GridSpec, psi: np.ndarray) -> np.ndarray:
    """h-weighted Dirichlet energy of each row of psi."""
    psi = np.atleast_2d(psi)
    return np.array([grad_norm_sq(grid, row) for row in psi])


def trace_tail(grid: GridSpec, eos: EquationOfState, sigma: float, K: int,
               which: str = "F") -> float:
    """Upper bound on sum_{k>K} g(mu_k + sigma) for g = F or f.

    Uses the exact free-operator eigenvalues as lower bounds for the
    eigenvalues of -Laplacian + V with V >= 0, on which the decreasing
    g is evaluated.  The discrete spectrum is finite, so the bound is a
    plain sum over the remaining N - K modes.
    """
    if K >= grid.N:
        return 0.0
    ks = np.arange(K + 1, grid.N + 1)
    args = grid.free_eigenvalue(ks) + sigma
    g = F_many if which == "F" else f_many
    return float(np.sum(g(eos, args)))


def _trace(H_or_mu, sigma: float, eos: EquationOfState, K: int,
           grid: GridSpec, which: str, tail_frac: float) -> float:
    g = F_many if which == "F" else f_many
    mu = np.asarray(H_or_mu, dtype=float)
    if mu.size < K:
        raise ValueError(
            f"trace over {K} modes requested but only {mu.size} computed")
    mu = mu[:K]
    partial = float(np.sum(g(eos, mu + sigma)))
    tail = trace_tail(grid, eos, sigma, K, which=which)
    if tail > tail_frac * (abs(partial) + 1e-30):
        raise TruncationError(
            "neglected spectral tail %.3e exceeds %.1e of the partial trace %.3e; "
            "increase K" % (tail, tail_frac, partial),
            tail=tail, partial=partial)
    return partial


def trace_F(H: Hamiltonian, sigma: float, eos: EquationOfState,
            K: int | None = None, spectral: SpectralData | None = None,
            tail_frac: float = _TAIL_FRAC) -> float:
    """Truncated trace of F(H + sigma) over the lowest K modes.

    Pass ``spectral`` to reuse an existing eigensolve.  Raises
    TruncationError when the tail bound is not a negligible fraction of
    the partial sum.
    """
    if spectral is None:
        spectral = eigensolve(H, K)
    K = spectral.K if K is None else K
    return _trace(spectral.mu, sigma, eos, K, H.grid, "F", tail_frac)


def trace_f(H: Hamiltonian, sigma: float, eos: EquationOfState,
            K: int | None = None, spectral: SpectralData | None = None,
            tail_frac: float = _TAIL_FRAC) -> float:
    """Truncated trace of f(H + sigma); see trace_F."""
    if spectral is None:
        spectral = eigensolve(H, K)
    K = spectral.K if K is None else K
    return _trace(spectral.mu, sigma, eos, K, H.grid, "f", tail_frac)
