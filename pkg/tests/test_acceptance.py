"""Acceptance gate: ten end-to-end checks at frozen tolerances.

Each test prints one PASS line on success; a failing criterion shows up as
an ordinary pytest failure for that test.  All runs are seeded and sized to
finish on one machine in a few minutes.
"""

import time

import numpy as np
import pytest
import scipy.linalg

from spstab.eos import (F_eval, F_many, boltzmann, f_many, fermi_dirac,
                        fstar_many, power_cutoff, shifted)
from spstab.evolution import ensemble_from_steady, evolve, perturb
from spstab.grid import GridSpec, grad_norm_sq, laplacian_apply
from spstab.spectral import Hamiltonian, eigensolve
from spstab.stability import (jensen_check, random_ensemble,
                              run_stability_experiment,
                              trace_inequality_check)
from spstab.steady import (DualPoint, SolverOptions, occupation_density,
                           phi_eval, solve_steady)


@pytest.fixture
def announce(capsys):
    def _announce(line):
        with capsys.disabled():
            print("\n" + line)
    return _announce


@pytest.fixture(scope="module")
def steady_trio():
    """The three reference steady solves (N = 256, K = 24), timed."""
    grid = GridSpec(L=8.0, N=256)
    opts = SolverOptions(K=24, tol_V=1e-10)
    out = {}
    for name, eos, Lam in (("boltzmann", boltzmann(1.0), 1.0),
                           ("fermi-dirac", fermi_dirac(1.0, 1.0), 1.0),
                           ("power-cutoff", power_cutoff(5.0, 1.0), 3.0)):
        t0 = time.perf_counter()
        st = solve_steady(eos, Lam, grid, opts)
        out[name] = (st, time.perf_counter() - t0)
    return out


@pytest.fixture(scope="module")
def steady128():
    return solve_steady(boltzmann(1.0), 1.0, GridSpec(L=8.0, N=128),
                        SolverOptions(K=24, tol_V=1e-10))


@pytest.fixture(scope="module")
def steady64():
    return solve_steady(boltzmann(1.0), 1.0, GridSpec(L=8.0, N=64),
                        SolverOptions(K=24, tol_V=1e-10))


def test_criterion_01_spectral_oracle(announce):
    t0 = time.perf_counter()
    grid = GridSpec(L=8.0, N=63)
    sd = eigensolve(Hamiltonian(grid, np.zeros(grid.N)), K=16)
    exact = grid.free_eigenvalue(np.arange(1, 17))
    rel_free = np.max(np.abs(sd.mu - exact) / exact)
    assert rel_free <= 1e-10

    grid = GridSpec(L=8.0, N=64)
    rng = np.random.default_rng(101)
    V = rng.uniform(0.0, 1.0, grid.N)
    sd = eigensolve(Hamiltonian(grid, V), K=grid.N)
    dense = (np.diag(2.0 / grid.h ** 2 + V)
             - np.diag(np.full(grid.N - 1, 1.0 / grid.h ** 2), 1)
             - np.diag(np.full(grid.N - 1, 1.0 / grid.h ** 2), -1))
    mu_ref = scipy.linalg.eigh(dense, eigvals_only=True)
    err_dense = np.max(np.abs(sd.mu - mu_ref) / (1.0 + np.abs(mu_ref)))
    assert err_dense <= 1e-9
    elapsed = time.perf_counter() - t0
    assert elapsed < 1.0
    announce("PASS criterion 1: spectral oracle (free rel err %.1e, "
             "dense err %.1e, %.2f s)" % (rel_free, err_dense, elapsed))


def test_criterion_02_conjugacy_suite(announce):
    t0 = time.perf_counter()
    rng = np.random.default_rng(42)
    worst_ineq, worst_eq = np.inf, 0.0
    for eos, lo, hi in ((boltzmann(1.0), -4.0, 8.0),
                        (fermi_dirac(1.0, 1.0), -4.0, 8.0),
                        (power_cutoff(5.0, 1.0), -5.0, 7.0)):
        mu = rng.uniform(lo, hi, size=10_000)
        lam = f_many(eos, rng.uniform(lo, hi, size=10_000))
        vals = fstar_many(eos, lam) + lam * mu + F_many(eos, mu)
        assert vals.min() >= -1e-10
        lam_eq = f_many(eos, mu)
        eq = fstar_many(eos, lam_eq) + lam_eq * mu + F_many(eos, mu)
        assert eq.min() >= -1e-10 and eq.max() <= 1e-8
        worst_ineq = min(worst_ineq, vals.min())
        worst_eq = max(worst_eq, np.max(np.abs(eq)))
    elapsed = time.perf_counter() - t0
    assert elapsed < 5.0
    announce("PASS criterion 2: conjugacy, 3x10^4 pairs (min margin %.1e, "
             "max |equality| %.1e, %.2f s)" % (worst_ineq, worst_eq, elapsed))


def test_criterion_03_jensen_suite(announce):
    grid = GridSpec(L=8.0, N=64)
    rng = np.random.default_rng(303)
    V = 0.5 * np.sin(np.pi * grid.x / grid.L) ** 2 + 0.1 * rng.uniform(
        0.0, 1.0, grid.N)
    eos = boltzmann(1.0)
    worst = -np.inf
    for _ in range(100):
        psi = rng.standard_normal(grid.N) + 1j * rng.standard_normal(grid.N)
        psi /= np.sqrt(grid.h) * np.linalg.norm(psi)
        lhs, rhs = jensen_check(psi, V, eos, grid, K=grid.N)
        assert lhs <= rhs + 1e-10
        worst = max(worst, lhs - rhs)
    sd = eigensolve(Hamiltonian(grid, V), K=8)
    eq_dev = 0.0
    for k in range(8):
        lhs, rhs = jensen_check(sd.psi[k].astype(complex), V, eos, grid, K=8)
        eq_dev = max(eq_dev, abs(lhs - rhs))
    assert eq_dev <= 1e-8
    announce("PASS criterion 3: Jensen, 100 states (worst lhs-rhs %.1e, "
             "eigenstate equality %.1e)" % (worst, eq_dev))


def test_criterion_04_trace_inequality_suite(announce):
    grid = GridSpec(L=8.0, N=64)
    rng = np.random.default_rng(404)
    V = 0.4 * np.sin(np.pi * grid.x / grid.L) ** 2
    families = (boltzmann(1.0), fermi_dirac(1.0, 1.0), power_cutoff(5.0, 1.0))
    worst = np.inf
    for i in range(200):
        eos = families[i % 3]
        st = random_ensemble(grid, V, eos, K=12, rng=rng)
        _, _, margin = trace_inequality_check(st, V, eos, grid, K=grid.N)
        assert margin >= -1e-10
        worst = min(worst, margin)
    eq_dev = 0.0
    sd = eigensolve(Hamiltonian(grid, V), K=18)
    for eos in families:
        from spstab.evolution import EnsembleState
        st = EnsembleState(psi=sd.psi.astype(complex),
                           lam=f_many(eos, sd.mu))
        _, _, margin = trace_inequality_check(st, V, eos, grid, K=18)
        eq_dev = max(eq_dev, abs(margin))
    assert eq_dev <= 1e-8
    announce("PASS criterion 4: trace inequality, 200 ensembles (worst "
             "margin %.1e, constructed equality %.1e)" % (worst, eq_dev))


def test_criterion_05_steady_solves(announce, steady_trio):
    grid = GridSpec(L=8.0, N=256)
    opts = SolverOptions(K=24, tol_V=1e-10)
    V_alt = 0.2 * np.sin(np.pi * grid.x / grid.L) ** 2
    summary = []
    for name, (st, elapsed) in steady_trio.items():
        c = st.certificates
        assert c["poisson_residual_inf"] < 1e-8
        assert c["charge_residual"] < 1e-10
        phis = np.asarray(st.history["phi"])
        slack = 1e-12 * (1.0 + np.abs(phis[:-1]))
        assert np.all(np.diff(phis) >= -slack)
        assert elapsed < 10.0
        t0 = time.perf_counter()
        st2 = solve_steady(st.eos, st.Lambda, grid, opts, V_init=V_alt)
        elapsed2 = time.perf_counter() - t0
        assert elapsed2 < 10.0
        dV = np.max(np.abs(st2.V0 - st.V0))
        assert dV <= 1e-7
        summary.append("%s dV=%.1e %.1fs" % (name, dV, elapsed + elapsed2))
    st_pc = steady_trio["power-cutoff"][0]
    assert int(np.count_nonzero(st_pc.lambda0 > 0.0)) >= 3
    announce("PASS criterion 5: steady solves (" + "; ".join(summary) + ")")


def test_criterion_06_duality_identity(announce, steady_trio):
    gaps = {}
    for name, (st, _) in steady_trio.items():
        gap = abs(st.certificates["phi_value"] - st.certificates["hc_value"])
        assert gap <= 1e-8
        gaps[name] = gap
    announce("PASS criterion 6: duality gap |Phi - H_C| (max %.1e)"
             % max(gaps.values()))


def test_criterion_07_propagator_conservation(announce, steady64):
    st = steady64
    eos_sh = shifted(st.eos, st.sigma0)

    state = perturb(st, "phase", 0.5)
    tr = evolve(state, st.grid, eos_sh, dt=1e-3, T=10.0, sample_every=100)
    assert np.max(tr.mass_dev) <= 1e-12
    assert not tr.orth_flagged
    drift_default_H = np.max(np.abs(tr.H - tr.H[0]))
    drift_default_HC = np.max(np.abs(tr.H_C - tr.H_C[0]))
    assert drift_default_H <= 1e-8 and drift_default_HC <= 1e-8

    # second-order law, resolved with a single midpoint sweep so the dt^2
    # term dominates roundoff (the default two-sweep scheme conserves both
    # functionals to roundoff, leaving no signal to halve)
    drifts = {}
    for dt in (1e-3, 5e-4):
        tr1 = evolve(perturb(st, "phase", 0.5), st.grid, eos_sh, dt=dt,
                     T=10.0, sample_every=int(round(1.0 / dt)),
                     midpoint_sweeps=1)
        assert np.max(tr1.mass_dev) <= 1e-12
        drifts[dt] = (np.max(np.abs(tr1.H - tr1.H[0])),
                      np.max(np.abs(tr1.H_C - tr1.H_C[0])))
    ratio_H = drifts[1e-3][0] / drifts[5e-4][0]
    ratio_HC = drifts[1e-3][1] / drifts[5e-4][1]
    assert 3.5 <= ratio_H <= 4.5
    assert 3.5 <= ratio_HC <= 4.5
    announce("PASS criterion 7: conservation (mass dev %.1e, default "
             "drift %.1e, halving ratios H %.2f / H_C %.2f)"
             % (np.max(tr.mass_dev), drift_default_H, ratio_H, ratio_HC))


def test_criterion_08_stationarity(announce, steady_trio):
    st, _ = steady_trio["boltzmann"]
    n0 = occupation_density(st.spectral, st.lambda0)
    state = ensemble_from_steady(st)
    tr = evolve(state, st.grid, shifted(st.eos, st.sigma0), dt=1e-3, T=5.0,
                sample_every=500, reference_V=st.V0, snapshots=True)
    dev = 0.0
    for i in range(tr.t.size):
        n_t = laplacian_apply(st.grid, tr.V_snapshots[i])
        dev = max(dev, float(np.max(np.abs(n_t - n0))))
    assert dev <= 1e-6
    announce("PASS criterion 8: stationarity over T=5 "
             "(max ||n(t)-n0||_inf = %.1e)" % dev)


def test_criterion_09_stability_bound(announce, steady128):
    st = steady128
    lines = []
    for kind in ("phase", "occupation", "mix"):
        bounds = []
        for eps in (0.1, 0.05, 0.025):
            t0 = time.perf_counter()
            _, rep = run_stability_experiment(st, kind, eps, dt=1e-3, T=10.0,
                                              sample_every=100, seed=2026,
                                              tol_audit=1e-6)
            elapsed = time.perf_counter() - t0
            assert elapsed < 60.0
            assert rep.passed, (kind, eps, rep.violations[:3])
            assert rep.bound > 0.0
            bounds.append(rep.bound)
        assert bounds[0] > bounds[1] > bounds[2] > 0.0
        assert bounds[2] < 0.25 * bounds[0]  # decay toward zero
        lines.append("%s B=%.1e/%.1e/%.1e" % (kind, *bounds))
    announce("PASS criterion 9: stability bound d(t) <= B + 1e-6 on [0,10] "
             "(" + "; ".join(lines) + ")")


def test_criterion_10_concavity_probes(announce):
    grid = GridSpec(L=8.0, N=32)
    eos, Lam = boltzmann(1.0), 1.0
    rng = np.random.default_rng(1010)
    worst = np.inf
    for _ in range(100):
        Va = rng.uniform(0.0, 2.0, grid.N)
        Vb = rng.uniform(0.0, 2.0, grid.N)
        sa, sb = rng.uniform(-2.0, 2.0, size=2)
        phi_a = phi_eval(DualPoint(Va, sa), eos, Lam, grid, K=grid.N)
        phi_b = phi_eval(DualPoint(Vb, sb), eos, Lam, grid, K=grid.N)
        phi_m = phi_eval(DualPoint(0.5 * (Va + Vb), 0.5 * (sa + sb)),
                         eos, Lam, grid, K=grid.N)
        gap = phi_m - 0.5 * (phi_a + phi_b)
        assert gap >= -1e-10
        worst = min(worst, gap)

    st = solve_steady(eos, Lam, grid, SolverOptions(K=grid.N, tol_V=1e-10))
    phi0 = st.certificates["phi_value"]
    for _ in range(10):
        dV = rng.uniform(0.05, 1.0, grid.N)
        ds = rng.uniform(-1.0, 1.0)
        phi1 = phi_eval(DualPoint(st.V0 + 0.5 * dV, st.sigma0 + 0.5 * ds),
                        eos, Lam, grid, K=grid.N)
        phi2 = phi_eval(DualPoint(st.V0 + dV, st.sigma0 + ds),
                        eos, Lam, grid, K=grid.N)
        assert phi1 < phi0 - 1e-12
        assert phi2 < phi1 - 1e-12
    announce("PASS criterion 10: concavity (worst midpoint gap %.1e, "
             "10 outward rays strictly decreasing)" % worst)
