"""Grid, Laplacian, Poisson solve, and inner-product contracts."""

import numpy as np
import pytest

from spstab.grid import (GridSpec, grad_norm_sq, inner, laplacian_apply,
                         norm_l2, poisson_solve)


def dense_stencil(grid):
    A = np.zeros((grid.N, grid.N))
    i = np.arange(grid.N)
    A[i, i] = 2.0 / grid.h ** 2
    A[i[:-1], i[:-1] + 1] = -1.0 / grid.h ** 2
    A[i[1:], i[1:] - 1] = -1.0 / grid.h ** 2
    return A


def test_grid_geometry():
    g = GridSpec(L=1.0, N=4)
    assert g.h == pytest.approx(0.2)
    np.testing.assert_allclose(g.x, [0.2, 0.4, 0.6, 0.8], rtol=1e-15)


def test_grid_validation():
    with pytest.raises(ValueError):
        GridSpec(L=0.0, N=10)
    with pytest.raises(ValueError):
        GridSpec(L=-1.0, N=10)
    with pytest.raises(ValueError):
        GridSpec(L=1.0, N=0)


def test_free_eigenpairs_match_dense_oracle():
    g = GridSpec(L=3.0, N=12)
    A = dense_stencil(g)
    w = np.linalg.eigvalsh(A)
    exact = np.array([g.free_eigenvalue(k) for k in range(1, g.N + 1)])
    np.testing.assert_allclose(np.sort(exact), w, rtol=1e-12)
    for k in (1, 3, 12):
        v = g.free_eigenvector(k)
        assert norm_l2(g, v) == pytest.approx(1.0, abs=1e-12)
        resid = A @ v - g.free_eigenvalue(k) * v
        assert np.max(np.abs(resid)) < 1e-10


def test_laplacian_apply_matches_dense():
    g = GridSpec(L=2.0, N=17)
    A = dense_stencil(g)
    rng = np.random.default_rng(0)
    u = rng.standard_normal(g.N) + 1j * rng.standard_normal(g.N)
    np.testing.assert_allclose(laplacian_apply(g, u), A @ u, rtol=1e-13,
                               atol=1e-13)


def test_laplacian_positive_definite():
    g = GridSpec(L=2.0, N=17)
    rng = np.random.default_rng(1)
    for _ in range(5):
        u = rng.standard_normal(g.N)
        assert g.h * (u @ laplacian_apply(g, u)) > 0.0


def test_poisson_quadratic_closed_form():
    # constant unit source: the discrete solution equals x (L - x) / 2
    # exactly because second differences of quadratics are exact
    g = GridSpec(L=5.0, N=33)
    V = poisson_solve(g, np.ones(g.N))
    exact = g.x * (g.L - g.x) / 2.0
    np.testing.assert_allclose(V, exact, rtol=1e-12, atol=1e-13)


def test_poisson_residual_and_roundtrip():
    g = GridSpec(L=8.0, N=50)
    rng = np.random.default_rng(2)
    V_true = np.abs(rng.standard_normal(g.N))
    n = laplacian_apply(g, V_true)
    V = poisson_solve(g, n.real)
    np.testing.assert_allclose(V, V_true, rtol=1e-10, atol=1e-12)


def test_poisson_maximum_principle():
    g = GridSpec(L=8.0, N=64)
    rng = np.random.default_rng(3)
    for _ in range(20):
        n = rng.random(g.N)
        V = poisson_solve(g, n)
        assert V.min() >= 0.0
        r = np.max(np.abs(laplacian_apply(g, V) - n))
        assert r <= 1e-10 * max(1.0, np.max(np.abs(n)))


def test_poisson_zero_source():
    g = GridSpec(L=8.0, N=16)
    V = poisson_solve(g, np.zeros(g.N))
    assert np.all(V == 0.0)


def test_poisson_rejects_bad_source():
    g = GridSpec(L=1.0, N=8)
    with pytest.raises(ValueError):
        poisson_solve(g, np.zeros(g.N - 1))
    with pytest.raises(ValueError):
        poisson_solve(g, np.zeros(g.N, dtype=complex))


def test_inner_product_weighting():
    g = GridSpec(L=2.0, N=9)
    v = g.free_eigenvector(2)
    assert inner(g, v, v).real == pytest.approx(1.0, abs=1e-12)
    assert inner(g, v, v).imag == pytest.approx(0.0, abs=1e-15)
    w = g.free_eigenvector(5)
    assert abs(inner(g, v, w)) < 1e-12


def test_grad_norm_summation_by_parts():
    g = GridSpec(L=3.0, N=21)
    rng = np.random.default_rng(4)
    for _ in range(10):
        u = rng.standard_normal(g.N) + 1j * rng.standard_normal(g.N)
        lhs = grad_norm_sq(g, u)
        rhs = float(np.real(inner(g, u, laplacian_apply(g, u))))
        assert lhs == pytest.approx(rhs, rel=1e-12)


def test_grad_norm_includes_boundary_links():
    # constant field: only the two boundary links contribute, each |1|^2 / h
    g = GridSpec(L=1.0, N=10)
    u = np.ones(g.N)
    assert grad_norm_sq(g, u) == pytest.approx(2.0 / g.h, rel=1e-13)
