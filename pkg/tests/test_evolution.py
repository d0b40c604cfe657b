"""Propagator conservation laws, stationarity, perturbation generators."""

import numpy as np
import pytest

from spstab.eos import boltzmann, shifted
from spstab.errors import ConfigError
from spstab.evolution import (EnsembleState, density, energy, energy_casimir,
                              ensemble_from_steady, evolve, perturb,
                              potential, step)
from spstab.grid import GridSpec, grad_norm_sq
from spstab.spectral import Hamiltonian, eigensolve
from spstab.steady import SolverOptions, solve_steady

GRID = GridSpec(L=8.0, N=64)
EOS = boltzmann(1.0)


@pytest.fixture(scope="module")
def steady():
    return solve_steady(EOS, 1.0, GRID, SolverOptions(K=24, tol_V=1e-10))


@pytest.fixture(scope="module")
def steady_ensemble(steady):
    return ensemble_from_steady(steady, buffer=4)


def test_density_basics():
    sd = eigensolve(Hamiltonian(GRID, np.zeros(GRID.N)), K=2)
    empty = EnsembleState(psi=sd.psi.astype(complex), lam=np.zeros(2))
    assert np.all(density(empty, GRID) == 0.0)
    assert np.all(potential(empty, GRID) == 0.0)
    one = EnsembleState(psi=sd.psi.astype(complex), lam=np.array([1.0, 0.0]))
    assert GRID.h * density(one, GRID).sum() == pytest.approx(1.0, abs=1e-12)


def test_density_nonnegative_and_potential_admissible(steady_ensemble):
    n = density(steady_ensemble, GRID)
    assert n.min() >= 0.0
    V = potential(steady_ensemble, GRID)
    assert V.min() >= 0.0


def test_steady_ensemble_reproduces_v0(steady, steady_ensemble):
    V = potential(steady_ensemble, GRID)
    assert np.max(np.abs(V - steady.V0)) < 1e-8


def test_energy_zero_for_empty_ensemble():
    sd = eigensolve(Hamiltonian(GRID, np.zeros(GRID.N)), K=3)
    empty = EnsembleState(psi=sd.psi.astype(complex), lam=np.zeros(3))
    assert energy(empty, GRID) == 0.0
    assert energy_casimir(empty, GRID, EOS) == 0.0


def test_energy_weak_coupling_limit():
    # nearly empty single mode: energy approaches the bare eigenvalue
    sd = eigensolve(Hamiltonian(GRID, np.zeros(GRID.N)), K=3)
    lam = np.array([1e-8, 0.0, 0.0])
    st = EnsembleState(psi=sd.psi.astype(complex), lam=lam)
    per_unit = energy(st, GRID) / 1e-8
    assert per_unit == pytest.approx(sd.mu[0], rel=1e-6)


def test_energy_quadratic_form_identity(steady_ensemble):
    # field energy two ways: int |grad V|^2 = int n V by parts
    n = density(steady_ensemble, GRID)
    V = potential(steady_ensemble, GRID)
    lhs = grad_norm_sq(GRID, V)
    rhs = GRID.h * float(n @ V)
    assert lhs == pytest.approx(rhs, rel=1e-10)


def test_energy_casimir_phase_invariant(steady_ensemble):
    rotated = EnsembleState(psi=np.exp(0.73j) * steady_ensemble.psi,
                            lam=steady_ensemble.lam)
    assert energy_casimir(rotated, GRID, EOS) == pytest.approx(
        energy_casimir(steady_ensemble, GRID, EOS), rel=1e-14)


def test_free_eigenstate_acquires_cayley_phase():
    sd = eigensolve(Hamiltonian(GRID, np.zeros(GRID.N)), K=1)
    st = EnsembleState(psi=sd.psi.astype(complex), lam=np.zeros(1))
    dt = 1e-3
    cur = st
    for _ in range(1000):
        cur = step(cur, dt, GRID)
    mu = sd.mu[0]
    phase = ((1.0 - 0.5j * dt * mu) / (1.0 + 0.5j * dt * mu)) ** 1000
    assert np.max(np.abs(cur.psi[0] - phase * st.psi[0])) < 1e-10
    amp = abs(np.sqrt(GRID.h) * np.linalg.norm(cur.psi[0]) - 1.0)
    assert amp < 1e-10


def test_step_mass_and_orthonormality(steady):
    state = perturb(steady, "mix", 0.2, seed=5)
    for _ in range(20):
        state = step(state, 1e-3, GRID)
    norms = np.sqrt(GRID.h) * np.linalg.norm(state.psi, axis=1)
    assert np.max(np.abs(norms - 1.0)) < 1e-12
    G = GRID.h * (state.psi.conj() @ state.psi.T)
    assert np.max(np.abs(G - np.eye(state.K))) < 1e-10


def test_step_time_reversal(steady):
    state = perturb(steady, "phase", 0.2)
    fwd = step(state, 1e-3, GRID)
    back = step(fwd, -1e-3, GRID)
    assert np.max(np.abs(back.psi - state.psi)) < 1e-9


def test_stationarity_of_steady_density(steady, steady_ensemble):
    n0 = density(steady_ensemble, GRID)
    tr = evolve(steady_ensemble, GRID, shifted(EOS, steady.sigma0),
                dt=1e-3, T=1.0, sample_every=200, reference_V=steady.V0)
    nf = density(tr.final_state, GRID)
    assert np.max(np.abs(nf - n0)) < 1e-8
    assert np.max(tr.dist) < 1e-12


def test_evolve_diagnostics_shape(steady, steady_ensemble):
    tr = evolve(steady_ensemble, GRID, EOS, dt=1e-3, T=0.1, sample_every=20,
                snapshots=True)
    # samples at steps 0, 20, 40, 60, 80, 100
    assert tr.t.shape == (6,)
    assert np.all(np.diff(tr.t) > 0.0)
    for series in (tr.mass_dev, tr.orth_dev, tr.H, tr.H_C):
        assert series.shape == tr.t.shape
        assert np.all(np.isfinite(series))
    assert tr.dist is None
    assert tr.V_snapshots.shape == (6, GRID.N)
    assert not tr.orth_flagged


def test_evolve_validates_arguments(steady_ensemble):
    with pytest.raises(ValueError):
        evolve(steady_ensemble, GRID, EOS, dt=-1e-3, T=1.0)
    with pytest.raises(ValueError):
        evolve(steady_ensemble, GRID, EOS, dt=1e-3, T=1.0, sample_every=0)
    with pytest.raises(ValueError):
        evolve(steady_ensemble, GRID, EOS, dt=3e-3, T=1.0)  # not a multiple


def test_perturb_eps_zero_is_identity(steady, steady_ensemble):
    for kind in ("phase", "occupation", "mix"):
        st = perturb(steady, kind, 0.0, seed=1)
        assert np.array_equal(st.psi, steady_ensemble.psi)
        assert np.array_equal(st.lam, steady_ensemble.lam)


def test_perturb_phase_preserves_density(steady, steady_ensemble):
    st = perturb(steady, "phase", 0.1)
    np.testing.assert_allclose(density(st, GRID),
                               density(steady_ensemble, GRID),
                               rtol=0, atol=1e-14)
    assert energy(st, GRID) > energy(steady_ensemble, GRID)


def test_perturb_mix_unitary(steady, steady_ensemble):
    st = perturb(steady, "mix", 0.1, seed=5)
    G = GRID.h * (st.psi.conj() @ st.psi.T)
    assert np.max(np.abs(G - np.eye(st.K))) < 1e-12
    assert st.lam.sum() == pytest.approx(steady_ensemble.lam.sum(), abs=1e-14)


def test_perturb_occupation_stays_admissible(steady):
    st = perturb(steady, "occupation", 0.5, seed=9)
    assert st.lam.min() >= 0.0
    st2 = perturb(steady, "occupation", 0.5, seed=9)
    np.testing.assert_array_equal(st.lam, st2.lam)  # seeded determinism


def test_perturb_unknown_kind(steady):
    with pytest.raises(ConfigError):
        perturb(steady, "wiggle", 0.1)


def test_ensemble_state_validation():
    with pytest.raises(ValueError):
        EnsembleState(psi=np.zeros((2, 8), dtype=complex),
                      lam=np.array([1.0, -0.5]))
    with pytest.raises(ValueError):
        EnsembleState(psi=np.zeros(8, dtype=complex), lam=np.ones(1))
