import itertools
import math

import numpy as np
import pytest

from core.errors import InvalidResolution, LengthMismatch, UnderResolved
from geometry.basis import build_basis, dealiased_resolution
from geometry.manifolds import ManifoldKind, ManifoldSpec, build_grid, integrate


@pytest.mark.unit
@pytest.mark.parametrize(
    "spec, resolution, volume",
    [
        (ManifoldSpec.torus1(), 64, 2.0 * math.pi),
        (ManifoldSpec.sphere2(), (16, 32), 4.0 * math.pi),
        (ManifoldSpec.torus2(), (32, 32), 4.0 * math.pi**2),
        (ManifoldSpec.torus2((1.0, 3.0)), (8, 12), 3.0),
    ],
)
def test_grid_weights_sum_to_volume(spec, resolution, volume):
    grid = build_grid(spec, resolution)
    assert np.all(grid.weights > 0)
    assert grid.weights.sum() == pytest.approx(volume, rel=1e-12)
    assert spec.analytic_volume == pytest.approx(volume, rel=1e-12)


def test_dimension_matches_kind():
    assert ManifoldSpec.torus1().dimension == 1
    assert ManifoldSpec.torus2().dimension == 2
    assert ManifoldSpec.sphere2().dimension == 2


def test_too_few_nodes_rejected():
    with pytest.raises(InvalidResolution):
        build_grid(ManifoldSpec.torus1(), 3)
    with pytest.raises(InvalidResolution):
        build_grid(ManifoldSpec.torus2(), (8, 3))


def test_bad_periods_rejected():
    with pytest.raises(InvalidResolution):
        ManifoldSpec.torus1(-1.0)


def test_sphere_chart_tables(sphere_grid):
    theta = sphere_grid.nodes[:, 0]
    s, c = np.sin(theta), np.cos(theta)
    # no node on a pole
    assert np.all(np.abs(s) > 0)
    assert np.allclose(sphere_grid.metric_determinant, s**2, atol=1e-14)
    assert np.allclose(sphere_grid.christoffel[:, 0, 1, 1], -s * c, atol=1e-14)
    assert np.allclose(sphere_grid.christoffel[:, 1, 0, 1], c / s, atol=1e-14)
    assert np.allclose(sphere_grid.christoffel[:, 1, 1, 0], c / s, atol=1e-14)


def test_integrate_examples(torus1_grid, sphere_grid):
    x = torus1_grid.nodes[:, 0]
    assert integrate(sphere_grid, np.ones(sphere_grid.n_nodes)) == pytest.approx(4.0 * math.pi, rel=1e-12)
    assert abs(integrate(torus1_grid, np.cos(x))) <= 1e-12
    assert integrate(torus1_grid, np.cos(x) ** 2) == pytest.approx(math.pi, abs=1e-12)


def test_integrate_length_mismatch(torus1_grid):
    with pytest.raises(LengthMismatch):
        integrate(torus1_grid, np.ones(torus1_grid.n_nodes - 1))


def test_torus1_eigenvalues(torus1_grid):
    basis = build_basis(torus1_grid.spec, torus1_grid, 5)
    assert np.allclose(basis.mu, [0, 1, 1, 4, 4])
    assert np.allclose(basis.lam, np.sqrt([1, 2, 2, 5, 5]))
    # ties: the sin mode (label -k) precedes the cos mode (label k)
    assert basis.labels[:3] == ((0,), (-1,), (1,))
    x = torus1_grid.nodes[:, 0]
    assert np.allclose(basis.values[1], np.sin(x) / math.sqrt(math.pi), atol=1e-14)
    assert np.allclose(basis.values[2], np.cos(x) / math.sqrt(math.pi), atol=1e-14)


def test_sphere_eigenvalues(sphere_grid):
    basis = build_basis(sphere_grid.spec, sphere_grid, 4)
    assert np.allclose(basis.mu, [0, 2, 2, 2])
    assert basis.labels == ((0, 0), (1, -1), (1, 0), (1, 1))


def test_torus2_ties_lexicographic(torus2_grid):
    basis = build_basis(torus2_grid.spec, torus2_grid, 3)
    assert np.allclose(basis.mu, [0, 1, 1])
    assert basis.labels[1] < basis.labels[2]


def test_basis_is_nested(torus2_grid):
    small = build_basis(torus2_grid.spec, torus2_grid, 7)
    large = build_basis(torus2_grid.spec, torus2_grid, 20)
    assert large.labels[:7] == small.labels
    assert np.array_equal(large.values[:7], small.values)


@pytest.mark.parametrize("periods", [(2.0 * math.pi, 20.0 * math.pi), (20.0 * math.pi, 2.0 * math.pi)])
def test_anisotropic_torus_labels_match_brute_force(periods):
    spec = ManifoldSpec.torus2(periods)
    grid = build_grid(spec, dealiased_resolution(spec, 25))
    basis = build_basis(spec, grid, 25)

    wavenumbers = [2.0 * math.pi / L for L in spec.periods]
    candidates = sorted(
        (sum((k * w) ** 2 for k, w in zip(label, wavenumbers)), label)
        for label in itertools.product(range(-60, 61), repeat=2)
    )
    assert basis.labels == tuple(label for _, label in candidates[:25])
    assert np.allclose(basis.mu, [mu for mu, _ in candidates[:25]], rtol=0, atol=1e-12)
    # long axis carries wavenumbers up to 10 before the short axis reaches 1
    long_axis = 1 if periods[1] > periods[0] else 0
    assert max(abs(label[long_axis]) for label in basis.labels) == 10


@pytest.mark.parametrize("n", [1, 9, 32])
def test_gram_matrix_is_identity(any_grid, n):
    basis = build_basis(any_grid.spec, any_grid, n)
    assert np.abs(basis.gram() - np.eye(n)).max() <= 1e-10


def test_pointwise_eigenrelation(any_grid):
    basis = build_basis(any_grid.spec, any_grid, 25)
    residual = basis.laplacian_values() + basis.mu[:, None] * basis.values
    assert np.abs(residual).max() <= 1e-8


def test_mu_nondecreasing(any_grid):
    basis = build_basis(any_grid.spec, any_grid, 30)
    assert np.all(np.diff(basis.mu) >= 0)


def test_laplacian_of_modes_integrates_to_zero(any_grid):
    basis = build_basis(any_grid.spec, any_grid, 16)
    assert np.abs(integrate(any_grid, basis.laplacian_values())).max() <= 1e-8


def test_under_resolved_basis():
    spec = ManifoldSpec.torus1()
    grid = build_grid(spec, 8)
    build_basis(spec, grid, 7)
    with pytest.raises(UnderResolved):
        build_basis(spec, grid, 9)
    sphere = build_grid(ManifoldSpec.sphere2(), 4)
    with pytest.raises(UnderResolved):
        build_basis(sphere.spec, sphere, 25)


def test_basis_needs_matching_grid(torus1_grid):
    with pytest.raises(InvalidResolution):
        build_basis(ManifoldSpec.torus1(1.0), torus1_grid, 3)
    with pytest.raises(InvalidResolution):
        build_basis(torus1_grid.spec, torus1_grid, 0)


def test_dealiased_resolution():
    assert dealiased_resolution(ManifoldSpec.torus1(), 8) == (14,)
    assert dealiased_resolution(ManifoldSpec.sphere2(), 4) == (4, 8)
    counts = dealiased_resolution(ManifoldSpec.torus2(), 20)
    assert all(c % 2 == 0 for c in counts)
    spec = ManifoldSpec.torus2()
    grid = build_grid(spec, counts)
    build_basis(spec, grid, 20)


def test_metadata_round_trip(torus1_basis):
    meta = torus1_basis.metadata()
    assert meta["n"] == 9
    assert meta["basis_id"] == torus1_basis.basis_id
    assert len(meta["labels"]) == 9
    assert torus1_basis.spec.kind is ManifoldKind.TORUS1
