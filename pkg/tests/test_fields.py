import math

import numpy as np
import pytest

from core.errors import ConfigError, MissingPartials, QuadratureFailure
from fields.checks import check_geometry_compat, check_growth, check_parabolicity, identity_suite
from fields.models import CHI, CoefficientModel, Profile, from_standard_form, regularize, truncate
from fields.operators import div_div, div_oneform, div_tensor, div_vector, laplacian
from fields.registry import aniso_linear, build_model, burgers, compat_pair, heat, sine_drift
from fields.tensors import OneForm, ScalarField, TensorField, VectorField
from geometry.basis import build_basis
from geometry.manifolds import ManifoldSpec, build_grid


# divergence operators


def test_div_vector_sine_field(torus1_grid):
    x = torus1_grid.nodes[:, 0]
    X = VectorField.axis_wave(torus1_grid, 1.0)
    assert np.abs(div_vector(torus1_grid, X) - np.cos(x)).max() <= 1e-10


def test_div_vector_killing_field(sphere_grid):
    X = VectorField.constant(sphere_grid, [0.0, 1.0])
    assert np.abs(div_vector(sphere_grid, X)).max() <= 1e-12


def test_div_vector_constant_on_torus2(torus2_grid):
    X = VectorField.constant(torus2_grid, [1.5, -0.5])
    assert np.abs(div_vector(torus2_grid, X)).max() == 0.0


def test_div_oneform_cosine(torus1_grid):
    x = torus1_grid.nodes[:, 0]
    omega = OneForm(np.cos(x)[:, None], -np.sin(x)[:, None, None])
    assert np.abs(div_oneform(torus1_grid, omega) + np.sin(x)).max() <= 1e-12


def test_div_of_differential_is_laplacian(sphere_basis):
    grid = sphere_basis.grid
    for k in range(sphere_basis.n):
        omega = OneForm(sphere_basis.partials[k], sphere_basis.second_partials[k])
        expected = -sphere_basis.mu[k] * sphere_basis.values[k]
        assert np.abs(div_oneform(grid, omega) - expected).max() <= 1e-8


def test_div_oneform_polar_closed_form(sphere_grid):
    # omega = sin(theta) cos(theta) d theta: Div = d_theta(s c) + cot(theta) s c = cos(2 theta) + c^2
    theta = sphere_grid.nodes[:, 0]
    s, c = np.sin(theta), np.cos(theta)
    N = sphere_grid.n_nodes
    comps = np.zeros((N, 2))
    comps[:, 0] = s * c
    d1 = np.zeros((N, 2, 2))
    d1[:, 0, 0] = np.cos(2.0 * theta)
    expected = np.cos(2.0 * theta) + c**2
    assert np.abs(div_oneform(sphere_grid, OneForm(comps, d1)) - expected).max() <= 1e-12


@pytest.mark.parametrize("grid_name", ["torus2_grid", "sphere_grid"])
def test_div_tensor_of_scaled_identity_is_du(request, grid_name):
    grid = request.getfixturevalue(grid_name)
    basis = build_basis(grid.spec, grid, 9)
    u = ScalarField.from_basis(basis, np.linspace(1.0, -1.0, 9))
    div = div_tensor(grid, TensorField.identity(grid).scaled(u))
    assert np.abs(div.comps - u.d1).max() <= 1e-12


def test_div_tensor_of_identity_vanishes(sphere_grid):
    div = div_tensor(sphere_grid, TensorField.identity(sphere_grid))
    assert np.abs(div.comps).max() <= 1e-12


def test_div_tensor_against_fourier_differentiation(torus2_grid):
    # T^a_b = u_ab(x, y) built from Fourier modes; (Div T)_i = d_j T^j_i on the flat torus
    rng = np.random.default_rng(3)
    basis = build_basis(torus2_grid.spec, torus2_grid, 13)
    scalars = [ScalarField.from_basis(basis, rng.standard_normal(13)) for _ in range(4)]
    T = None
    for (a, b), s in zip([(0, 0), (0, 1), (1, 0), (1, 1)], scalars):
        term = TensorField.unit(torus2_grid, a, b).scaled(s)
        T = term if T is None else T + term
    expected = np.stack([scalars[0].d1[:, 0] + scalars[2].d1[:, 1], scalars[1].d1[:, 0] + scalars[3].d1[:, 1]], axis=-1)
    assert np.abs(div_tensor(torus2_grid, T).comps - expected).max() <= 1e-8


def test_div_div_of_linear_diffusion(sphere_basis):
    grid = sphere_basis.grid
    model = heat(grid)
    for k in (1, 4, 8):
        u = ScalarField.from_basis(sphere_basis, np.eye(sphere_basis.n)[k])
        dd = div_div(grid, model.tensor_along(u))
        assert np.abs(dd + sphere_basis.mu[k] * sphere_basis.values[k]).max() <= 1e-8


def test_div_div_anisotropic(torus2_grid):
    model = aniso_linear(torus2_grid, d_x=2.0, d_y=1.0)
    u = ScalarField.coordinate_wave(torus2_grid, 0, 1.0, "cos")
    dd = div_div(torus2_grid, model.tensor_along(u))
    assert np.abs(dd + 2.0 * np.cos(torus2_grid.nodes[:, 0])).max() <= 1e-12


def test_div_div_of_constant_tensor(sphere_grid):
    assert np.abs(div_div(sphere_grid, TensorField.identity(sphere_grid))).max() <= 1e-12


def test_missing_partials(torus1_grid):
    comps = np.ones((torus1_grid.n_nodes, 1))
    with pytest.raises(MissingPartials):
        div_vector(torus1_grid, VectorField(comps))
    with pytest.raises(MissingPartials):
        div_oneform(torus1_grid, OneForm(comps))
    with pytest.raises(MissingPartials):
        div_div(torus1_grid, TensorField(comps[:, :, None], np.zeros((torus1_grid.n_nodes, 1, 1, 1))))


def test_laplace_reduction(sphere_basis):
    grid = sphere_basis.grid
    u = ScalarField.from_basis(sphere_basis, np.arange(1.0, 10.0) / 10.0)
    reduced = div_div(grid, TensorField.identity(grid).scaled(u))
    assert np.abs(reduced - laplacian(grid, u)).max() <= 1e-8


# structural checks


def test_parabolicity_heat(any_grid):
    report = check_parabolicity(heat(any_grid))
    assert report.passed
    assert report.value == pytest.approx(1.0, abs=1e-12)


def test_parabolicity_anisotropic(torus2_grid):
    report = check_parabolicity(aniso_linear(torus2_grid, 2.0, 1.0))
    assert report.passed
    assert report.value == pytest.approx(1.0, abs=1e-12)


def test_parabolicity_counterexample(torus2_grid):
    model = CoefficientModel(
        name="indefinite",
        grid=torus2_grid,
        diffusion_terms=((Profile.linear_map(1.0), TensorField.constant(torus2_grid, np.diag([1.0, -1.0]))),),
        parabolicity_c=1.0,
    )
    report = check_parabolicity(model)
    assert not report.passed
    assert report.value == pytest.approx(-1.0)


def test_parabolicity_sphere_relative_to_metric(sphere_grid):
    # A = lam (K (x) K_flat) has A' with eigenvalues (0, sin^2) relative to g: not strictly parabolic
    model = CoefficientModel(
        name="killing",
        grid=sphere_grid,
        diffusion_terms=((Profile.linear_map(1.0), TensorField.sphere_frame(sphere_grid, "killing")),),
        parabolicity_c=0.1,
    )
    assert not check_parabolicity(model).passed


def test_growth_heat(any_grid):
    report = check_growth(heat(any_grid))
    assert report.passed
    assert 0 < report.value <= report.threshold


def test_growth_quadratic_flux_fails(torus1_grid):
    report = check_growth(burgers(torus1_grid), np.linspace(-5, 5, 11))
    assert not report.passed
    assert report.threshold is None


def test_growth_truncated_quadratic_flux(torus1_grid):
    truncated = truncate(burgers(torus1_grid))
    assert check_growth(truncated).passed
    wide = check_growth(truncated, np.linspace(-50.0, 50.0, 101))
    assert wide.passed


def test_geometry_compat_passes(any_grid):
    assert check_geometry_compat(heat(any_grid)).value <= 1e-12
    assert check_geometry_compat(compat_pair(any_grid)).passed


def test_geometry_compat_constant_coefficients(torus2_grid):
    model = CoefficientModel(
        name="constant",
        grid=torus2_grid,
        flux_terms=((Profile.power(2), VectorField.constant(torus2_grid, [1.0, 2.0])),),
        diffusion_terms=((Profile.linear_map(1.0), TensorField.constant(torus2_grid, [[2.0, 0.5], [0.5, 1.0]])),),
    )
    assert check_geometry_compat(model).value <= 1e-12


def test_geometry_compat_sine_drift_fails(torus1_grid):
    report = check_geometry_compat(sine_drift(torus1_grid))
    assert not report.passed
    # ||cos x * lam||_L2 at |lam| = 1
    assert report.value == pytest.approx(math.sqrt(math.pi), rel=1e-10)


def test_sine_drift_is_torus_only(sphere_grid):
    with pytest.raises(ConfigError):
        sine_drift(sphere_grid)


# truncation


def test_chi_shape():
    lam = np.arange(-2.0, 3.0 + 1e-9, 1e-3)
    assert np.all(CHI.d1(lam) >= 0)
    inside = np.linspace(0.0, 1.0, 11)
    assert np.allclose(CHI(inside), inside)
    assert np.allclose(CHI(np.array([-5.0, -1.0])), CHI(np.array([-1.0])))
    assert np.allclose(CHI(np.array([2.0, 10.0])), CHI(np.array([2.0])))
    assert 1.0 <= float(CHI(np.array([10.0]))[0]) <= 2.0


def test_chi_is_c2_at_blend_points():
    for point in (0.0, 1.0):
        h = 1e-7
        left, right = np.array([point - h]), np.array([point + h])
        assert abs(CHI.d1(left)[0] - CHI.d1(right)[0]) <= 1e-6
        assert abs(CHI.d2(left)[0] - CHI.d2(right)[0]) <= 1e-4


def test_truncate_matches_base_inside(torus1_grid):
    base = compat_pair(torus1_grid)
    truncated = truncate(base)
    lam = np.full((1, torus1_grid.n_nodes), 0.5)
    assert np.allclose(truncated.flux(lam), base.flux(lam))
    assert np.allclose(truncated.diffusion(lam), base.diffusion(lam))
    far = np.full((1, torus1_grid.n_nodes), 10.0)
    clipped = np.full((1, torus1_grid.n_nodes), float(CHI(np.array([10.0]))[0]))
    assert np.allclose(truncated.flux(far), base.flux(clipped))
    assert truncated.base is base


def test_truncate_preserves_compatibility(sphere_grid):
    assert check_geometry_compat(truncate(compat_pair(sphere_grid))).passed


def test_regularize_adds_laplacian(torus1_grid):
    model = regularize(burgers(torus1_grid, nu=0.1), 0.05)
    assert model.parabolicity_c == pytest.approx(0.15)
    assert model.is_linear_diffusion
    assert regularize(model, 0.0) is model


# standard form


def test_standard_form_identity(torus1_grid):
    form = from_standard_form(torus1_grid, [(Profile.constant(1.0), TensorField.identity(torus1_grid))])
    lam = np.linspace(-1.0, 1.0, 5)[:, None] * np.ones(torus1_grid.n_nodes)
    assert np.allclose(form.model.diffusion(lam)[..., 0, 0], lam)
    assert np.abs(form.model.flux(lam)).max() == 0.0


def test_standard_form_arctan(torus2_grid):
    a = Profile(
        "1/(1+lam^2)",
        lambda lam: 1.0 / (1.0 + lam**2),
        lambda lam: -2.0 * lam / (1.0 + lam**2) ** 2,
        lambda lam: (6.0 * lam**2 - 2.0) / (1.0 + lam**2) ** 3,
    )
    form = from_standard_form(torus2_grid, [(a, TensorField.identity(torus2_grid))], lambda_range=(-2.0, 2.0))
    lam = np.array([-2.0, -0.3, 0.0, 0.7, 2.0])
    values = form.diffusion_model.diffusion_terms[0][0](lam)
    assert np.allclose(values, np.arctan(lam), atol=1e-9)


def test_standard_form_zero(torus1_grid):
    form = from_standard_form(torus1_grid, [(Profile.zero(), TensorField.identity(torus1_grid))])
    lam = np.full((1, torus1_grid.n_nodes), 0.8)
    assert np.abs(form.model.diffusion(lam)).max() == 0.0


def test_standard_form_correction_on_sphere(sphere_grid):
    frame = TensorField.sphere_frame(sphere_grid, "polar")
    form = from_standard_form(sphere_grid, [(Profile.constant(1.0), frame)])
    _, X = form.correction[0]
    expected = div_tensor(sphere_grid, frame).sharp(sphere_grid).comps
    assert np.allclose(X.comps, expected)


def test_standard_form_quadrature_failure(torus1_grid):
    wiggly = Profile.sine(1.0).compose(Profile.linear_map(50.0))
    with pytest.raises(QuadratureFailure):
        from_standard_form(torus1_grid, [(wiggly, TensorField.identity(torus1_grid))], tol=1e-14, max_depth=0)


# identity suite


@pytest.mark.parametrize(
    "spec, resolution",
    [(ManifoldSpec.torus1(), 64), (ManifoldSpec.torus2(), 32), (ManifoldSpec.sphere2(), 16)],
)
def test_identity_suite(spec, resolution):
    grid = build_grid(spec, resolution)
    basis = build_basis(spec, grid, 9)
    reports = identity_suite(basis, seed=7, trials=5)
    names = {r.name for r in reports}
    assert names == {"integration_by_parts", "trace_identity", "laplace_reduction", "transpose_symmetry", "stokes"}
    failed = [(r.name, r.value) for r in reports if not r.passed]
    assert not failed


def test_build_model_errors(torus1_grid):
    with pytest.raises(ConfigError):
        build_model("nope", torus1_grid)
    with pytest.raises(ConfigError):
        build_model("heat", torus1_grid, {"bogus": 1.0})
    with pytest.raises(ConfigError):
        build_model("heat", torus1_grid, lambda_range=(1.0, 0.0))
    model = build_model("heat", torus1_grid, {"kappa": 2.0}, (0.0, 2.0))
    assert model.lambda_range == (0.0, 2.0)
    assert model.parabolicity_c == 2.0
