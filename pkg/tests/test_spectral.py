import math

import numpy as np
import pytest

from core.errors import LengthMismatch, ShapeMismatch
from fields.operators import gradient
from geometry.basis import build_basis
from geometry.manifolds import integrate, norm_sq_oneform
from spectral.ops import (
    SpectralVector,
    apply_lambda_s,
    hminus1_norm_of_functional,
    project,
    sobolev_inner,
    sobolev_norm,
    synthesize,
    synthesize_gradient,
    tail_bound,
    tail_norm,
)


@pytest.fixture(scope="module")
def basis(any_grid):
    return build_basis(any_grid.spec, any_grid, 16)


def _random(basis, seed):
    rng = np.random.default_rng(seed)
    return SpectralVector(rng.standard_normal(basis.n) / (1.0 + basis.mu), basis.basis_id)


def test_project_unit_mode(basis):
    v = project(basis, basis.values[3])
    expected = np.zeros(basis.n)
    expected[3] = 1.0
    assert np.abs(v.coeffs - expected).max() <= 1e-10
    assert np.all(project(basis, np.zeros(basis.grid.n_nodes)).coeffs == 0.0)


def test_project_analytic_inner_products(torus1_grid):
    basis = build_basis(torus1_grid.spec, torus1_grid, 5)
    x = torus1_grid.nodes[:, 0]
    v = project(basis, np.cos(x) + 2.0 * np.sin(2.0 * x))
    root_pi = math.sqrt(math.pi)
    # labels (0,), (-1,), (1,), (-2,), (2,)
    assert np.allclose(v.coeffs, [0.0, 0.0, root_pi, 2.0 * root_pi, 0.0], atol=1e-12)


def test_project_truncates(basis):
    samples = basis.values[:5].sum(axis=0)
    v = project(basis, samples, n=3)
    assert v.n == 3
    assert np.allclose(v.coeffs, 1.0, atol=1e-10)
    with pytest.raises(ShapeMismatch):
        project(basis, samples, n=basis.n + 1)


def test_project_length_mismatch(basis):
    with pytest.raises(LengthMismatch):
        project(basis, np.ones(basis.grid.n_nodes + 1))


def test_synthesize_unit_and_linearity(basis):
    unit = SpectralVector.unit(basis, 2)
    assert np.array_equal(synthesize(basis, unit).values, basis.values[2])
    v, w = _random(basis, 1), _random(basis, 2)
    combined = synthesize(basis, 2.0 * v + w * -0.5).values
    assert np.allclose(combined, 2.0 * synthesize(basis, v).values - 0.5 * synthesize(basis, w).values, atol=1e-13)


def test_round_trip_and_parseval(basis):
    v = _random(basis, 4)
    u = synthesize(basis, v)
    assert np.abs(project(basis, u.values).coeffs - v.coeffs).max() <= 1e-10
    l2 = math.sqrt(integrate(basis.grid, u.values**2))
    assert l2 == pytest.approx(float(np.linalg.norm(v.coeffs)), abs=1e-10)


def test_lambda_s(basis):
    v = _random(basis, 5)
    assert np.array_equal(apply_lambda_s(basis, v, 0.0).coeffs, v.coeffs)
    unit = SpectralVector.unit(basis, 7)
    assert apply_lambda_s(basis, unit, 2.0).coeffs[7] == pytest.approx(1.0 + basis.mu[7], rel=1e-12)
    back = apply_lambda_s(basis, apply_lambda_s(basis, v, 1.5), -1.5)
    assert np.abs(back.coeffs - v.coeffs).max() <= 1e-12


@pytest.mark.parametrize("s", [-1.0, 0.0, 1.0, 2.0])
def test_sobolev_products_of_modes(basis, s):
    gram = np.array(
        [[sobolev_inner(basis, SpectralVector.unit(basis, m), SpectralVector.unit(basis, k), s) for k in range(basis.n)] for m in range(basis.n)]
    )
    assert np.abs(gram - np.diag(basis.lam ** (2.0 * s))).max() <= 1e-10


def test_h1_norm_matches_quadrature(basis):
    grid = basis.grid
    for seed in range(10):
        v = _random(basis, 100 + seed)
        u = synthesize(basis, v, with_derivatives=True)
        grad_sq = norm_sq_oneform(grid, u.d1)
        quad = math.sqrt(integrate(grid, u.values**2 + grad_sq))
        assert sobolev_norm(basis, v, 1.0) == pytest.approx(quad, abs=1e-8)


def test_synthesized_gradient(basis):
    v = _random(basis, 9)
    u = synthesize(basis, v, with_derivatives=True)
    assert np.allclose(synthesize_gradient(basis, v), gradient(basis.grid, u), atol=1e-12)


def test_hminus1_norm(basis):
    pairings = np.zeros(basis.n)
    pairings[4] = 3.0
    assert hminus1_norm_of_functional(basis, pairings) == pytest.approx(3.0 / basis.lam[4])
    with pytest.raises(ShapeMismatch):
        hminus1_norm_of_functional(basis, np.zeros(basis.n + 1))


def test_tail_norm_and_bound(basis):
    v = _random(basis, 11)
    cut = 6
    tail = tail_norm(basis, v, cut)
    assert tail == pytest.approx(float(np.linalg.norm(v.coeffs[cut:])))
    assert tail <= tail_bound(basis, v, cut) * (1.0 + 1e-12)
    assert tail_bound(basis, v, basis.n) == 0.0


def test_mixed_bases_rejected(torus1_grid, sphere_grid):
    a = SpectralVector.zeros(build_basis(torus1_grid.spec, torus1_grid, 4))
    b = SpectralVector.zeros(build_basis(sphere_grid.spec, sphere_grid, 4))
    with pytest.raises(ShapeMismatch):
        a + b


def test_spectral_vector_validation():
    with pytest.raises(ShapeMismatch):
        SpectralVector(np.zeros((2, 2)), "x")
    with pytest.raises(ValueError):
        SpectralVector(np.array([0.0, np.nan]), "x")
