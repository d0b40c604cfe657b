"""Dual-functional maximization: Fermi level, SCF, ascent, certificates."""

import numpy as np
import pytest

from spstab.eos import boltzmann, f_many, fermi_dirac, power_cutoff
from spstab.errors import NonConvergenceError
from spstab.grid import GridSpec, laplacian_apply
from spstab.spectral import Hamiltonian, eigensolve
from spstab.steady import (DualPoint, SolverOptions, phi_eval, phi_gradient,
                           solve_fermi_level, solve_steady)

GRID = GridSpec(L=8.0, N=64)


@pytest.fixture(scope="module")
def boltz_steady():
    return solve_steady(boltzmann(1.0), 1.0, GRID,
                        SolverOptions(K=24, tol_V=1e-10))


def test_fermi_level_boltzmann_closed_form():
    # sum exp(-(mu + sigma)) = Lambda has the closed form
    # sigma = ln(sum exp(-mu) / Lambda)
    H = Hamiltonian(GRID, np.zeros(GRID.N))
    sd = eigensolve(H, K=GRID.N)
    eos = boltzmann(1.0)
    for Lam in (0.25, 1.0, 7.0):
        sig = solve_fermi_level(H, eos, Lam, spectral=sd)
        exact = np.log(np.sum(np.exp(-sd.mu)) / Lam)
        assert sig == pytest.approx(exact, abs=1e-11)


def test_fermi_level_charge_residual():
    rng = np.random.default_rng(3)
    V = 0.3 * rng.random(GRID.N)
    H = Hamiltonian(GRID, V)
    sd = eigensolve(H, K=24)
    for eos in (fermi_dirac(1.0, 1.0), power_cutoff(5.0, 1.0)):
        sig = solve_fermi_level(H, eos, 2.0, spectral=sd)
        charge = np.sum(f_many(eos, sd.mu + sig))
        assert abs(charge - 2.0) <= 1e-11


def test_fermi_level_rejects_nonpositive_charge():
    H = Hamiltonian(GRID, np.zeros(GRID.N))
    with pytest.raises(ValueError):
        solve_fermi_level(H, boltzmann(1.0), 0.0)
    with pytest.raises(ValueError):
        solve_fermi_level(H, boltzmann(1.0), -1.0)


def test_scf_certificates(boltz_steady):
    c = boltz_steady.certificates
    assert c["poisson_residual_inf"] < 1e-10
    assert c["charge_residual"] < 1e-10
    assert abs(c["phi_value"] - c["hc_value"]) < 1e-8
    assert c["tail_bound"] < 1e-20
    assert boltz_steady.sigma0 == pytest.approx(
        c["sigma0"], rel=1e-15)


def test_scf_self_consistency(boltz_steady):
    st = boltz_steady
    n = (st.lambda0[:, None] * st.spectral.psi ** 2).sum(axis=0)
    resid = np.max(np.abs(laplacian_apply(GRID, st.V0) - n))
    assert resid < 1e-10
    assert abs(st.lambda0.sum() - st.Lambda) < 1e-10
    np.testing.assert_allclose(
        st.lambda0, f_many(st.eos, st.spectral.mu + st.sigma0), rtol=1e-14)
    assert st.V0.min() >= 0.0


def test_phi_monotone_along_iterations(boltz_steady):
    phi = np.asarray(boltz_steady.history["phi"])
    slack = 1e-12 * (1.0 + np.abs(phi[:-1]))
    assert np.all(np.diff(phi) >= -slack)


def test_two_initializations_agree(boltz_steady):
    V_init = 0.3 * np.sin(np.pi * GRID.x / GRID.L) ** 2
    st2 = solve_steady(boltzmann(1.0), 1.0, GRID,
                       SolverOptions(K=24, tol_V=1e-10), V_init=V_init)
    assert np.max(np.abs(st2.V0 - boltz_steady.V0)) < 1e-7
    assert abs(st2.sigma0 - boltz_steady.sigma0) < 1e-9


def test_ascent_agrees_with_scf(boltz_steady):
    st2 = solve_steady(boltzmann(1.0), 1.0, GRID,
                       SolverOptions(K=24, tol_V=1e-9, method="ascent"))
    assert np.max(np.abs(st2.V0 - boltz_steady.V0)) < 1e-7
    assert abs(st2.sigma0 - boltz_steady.sigma0) < 1e-8


def test_other_families_converge():
    for eos, Lam in ((fermi_dirac(1.0, 1.0), 1.0),
                     (power_cutoff(5.0, 1.0), 3.0)):
        st = solve_steady(eos, Lam, GRID, SolverOptions(K=24, tol_V=1e-10))
        c = st.certificates
        assert c["poisson_residual_inf"] < 1e-10
        assert abs(c["phi_value"] - c["hc_value"]) < 1e-8


def test_gradient_matches_finite_differences(boltz_steady):
    eos = boltzmann(1.0)
    V = 0.7 * boltz_steady.V0 + 0.05
    pt = DualPoint(V, boltz_steady.sigma0 + 0.1)
    gV, gs = phi_gradient(pt, eos, 1.0, GRID, K=24)
    rng = np.random.default_rng(11)
    dV = rng.standard_normal(GRID.N)
    dV /= np.sqrt(GRID.h) * np.linalg.norm(dV)
    ds = 0.3
    errs = []
    for t in (1e-4, 1e-5):
        pp = phi_eval(DualPoint(V + t * dV, pt.sigma + t * ds), eos, 1.0,
                      GRID, K=24)
        pm = phi_eval(DualPoint(V - t * dV, pt.sigma - t * ds), eos, 1.0,
                      GRID, K=24)
        fd = (pp - pm) / (2.0 * t)
        an = GRID.h * float(gV @ dV) + gs * ds
        errs.append(abs(fd - an))
    # second-order central differences, allowing the roundoff floor of
    # re-solved eigenvalues to dominate at the smaller increment
    assert errs[0] < 1e-8
    assert errs[1] < max(errs[0], 2e-9)


def test_gradient_vanishes_at_maximizer(boltz_steady):
    st = boltz_steady
    gV, gs = phi_gradient(DualPoint(st.V0, st.sigma0), st.eos, st.Lambda,
                          GRID, spectral=st.spectral)
    assert np.max(np.abs(gV)) < 1e-9
    assert abs(gs) < 1e-10


def test_nonconvergence_carries_history():
    with pytest.raises(NonConvergenceError) as info:
        solve_steady(boltzmann(1.0), 1.0, GRID,
                     SolverOptions(K=24, max_iter=2, tol_V=1e-12))
    assert info.value.history
    assert len(info.value.history[0]["phi"]) == 2


def test_dual_point_validation():
    with pytest.raises(ValueError):
        DualPoint(-np.ones(GRID.N), 0.0)


def test_v_init_validation():
    with pytest.raises(ValueError):
        solve_steady(boltzmann(1.0), 1.0, GRID,
                     V_init=-np.ones(GRID.N))
    with pytest.raises(ValueError):
        solve_steady(boltzmann(1.0), 1.0, GRID,
                     V_init=np.ones(GRID.N - 1))


def test_solver_options_validation():
    with pytest.raises(ValueError):
        SolverOptions(method="newton")
    with pytest.raises(ValueError):
        SolverOptions(damping=0.0)
    with pytest.raises(ValueError):
        SolverOptions(damping=1.5)
