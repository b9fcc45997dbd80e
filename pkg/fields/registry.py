"""
Named coefficient models and noise coefficients, as referenced from run configs.
"""

import math
from dataclasses import replace
from typing import Callable, Dict, Mapping, Optional, Tuple

import numpy as np

from core.errors import ConfigError
from fields.models import CoefficientModel, NoiseTerm, Profile
from fields.tensors import ScalarField, TensorField, VectorField
from geometry.basis import build_basis
from geometry.manifolds import ManifoldKind, QuadratureGrid, norm_sq_vector


def incompressible_velocity(grid: QuadratureGrid) -> VectorField:
    """d/dx on T1, (sin y, sin x) on T2, the azimuthal Killing field d/dphi on S2."""
    kind = grid.spec.kind
    if kind is ManifoldKind.TORUS1:
        return VectorField.constant(grid, [1.0])
    if kind is ManifoldKind.TORUS2:
        return VectorField.shear_flow(grid)
    return VectorField.constant(grid, [0.0, 1.0])


def _sup_norm(grid: QuadratureGrid, X: VectorField) -> float:
    return float(np.sqrt(norm_sq_vector(grid, X.comps)).max())


def _require_torus(grid: QuadratureGrid, name: str) -> None:
    if grid.spec.kind is ManifoldKind.SPHERE2:
        raise ConfigError(f"model {name!r} is defined on tori only")


def heat(grid: QuadratureGrid, kappa: float = 1.0) -> CoefficientModel:
    return CoefficientModel(
        name="heat",
        grid=grid,
        diffusion_terms=((Profile.linear_map(kappa), TensorField.identity(grid)),),
        parabolicity_c=kappa,
        growth_C=2.0 * math.sqrt(grid.dimension) * kappa,
        params={"kappa": kappa},
    )


def aniso_linear(grid: QuadratureGrid, d_x: float = 2.0, d_y: float = 1.0) -> CoefficientModel:
    _require_torus(grid, "aniso_linear")
    diag = [d_x, d_y][: grid.dimension]
    D = np.diag(diag)
    return CoefficientModel(
        name="aniso_linear",
        grid=grid,
        diffusion_terms=((Profile.linear_map(1.0), TensorField.constant(grid, D)),),
        parabolicity_c=float(min(diag)),
        growth_C=2.0 * float(np.linalg.norm(D)),
        params={"d_x": d_x, "d_y": d_y},
    )


def bounded_nonlinear(grid: QuadratureGrid, beta: float = 0.5, flux_scale: float = 1.0) -> CoefficientModel:
    """A = (lam + beta tanh lam) delta with A' in [1, 1 + beta], f = flux_scale tanh(lam) V, Div V = 0."""
    V = incompressible_velocity(grid)
    sqrt_d = math.sqrt(grid.dimension)
    return CoefficientModel(
        name="bounded_nonlinear",
        grid=grid,
        flux_terms=((Profile.tanh(flux_scale), V),),
        diffusion_terms=((Profile.tanh_boosted(beta), TensorField.identity(grid)),),
        parabolicity_c=1.0,
        growth_C=abs(flux_scale) * _sup_norm(grid, V) + sqrt_d * (2.0 + beta),
        params={"beta": beta, "flux_scale": flux_scale},
    )


def burgers(grid: QuadratureGrid, nu: float = 0.1) -> CoefficientModel:
    """f = (lam^2 / 2) V, A = nu lam delta; quadratic flux, so no uniform growth constant."""
    return CoefficientModel(
        name="burgers",
        grid=grid,
        flux_terms=((Profile.power(2, 0.5), incompressible_velocity(grid)),),
        diffusion_terms=((Profile.linear_map(nu), TensorField.identity(grid)),),
        parabolicity_c=nu,
        growth_C=None,
        params={"nu": nu},
    )


def compat_pair(grid: QuadratureGrid, kappa: float = 1.0, flux_scale: float = 0.5) -> CoefficientModel:
    return CoefficientModel(
        name="compat_pair",
        grid=grid,
        flux_terms=((Profile.power(2, flux_scale), incompressible_velocity(grid)),),
        diffusion_terms=((Profile.linear_map(kappa), TensorField.identity(grid)),),
        parabolicity_c=kappa,
        growth_C=None,
        lambda_range=(0.0, 1.0),
        params={"kappa": kappa, "flux_scale": flux_scale},
    )


def sine_drift(grid: QuadratureGrid, kappa: float = 1.0) -> CoefficientModel:
    """f = lam sin(x) d/dx, Div_x f = lam cos x, so the model is not geometry compatible."""
    _require_torus(grid, "sine_drift")
    k = 2.0 * math.pi / grid.spec.periods[0]
    sqrt_d = math.sqrt(grid.dimension)
    return CoefficientModel(
        name="sine_drift",
        grid=grid,
        flux_terms=((Profile.linear_map(1.0), VectorField.axis_wave(grid, k)),),
        diffusion_terms=((Profile.linear_map(kappa), TensorField.identity(grid)),),
        parabolicity_c=kappa,
        growth_C=1.0 + 2.0 * sqrt_d * kappa,
        params={"kappa": kappa},
    )


MODELS: Dict[str, Callable[..., CoefficientModel]] = {
    "heat": heat,
    "aniso_linear": aniso_linear,
    "bounded_nonlinear": bounded_nonlinear,
    "burgers": burgers,
    "compat_pair": compat_pair,
    "sine_drift": sine_drift,
}


def build_model(
    name: str,
    grid: QuadratureGrid,
    params: Optional[Mapping[str, float]] = None,
    lambda_range: Optional[Tuple[float, float]] = None,
) -> CoefficientModel:
    try:
        builder = MODELS[name]
    except KeyError:
        raise ConfigError(f"unknown model {name!r}; expected one of {sorted(MODELS)}")
    try:
        model = builder(grid, **dict(params or {}))
    except TypeError as exc:
        raise ConfigError(f"bad parameters for model {name!r}: {exc}")
    if lambda_range is not None:
        lo, hi = (float(v) for v in lambda_range)
        if not lo < hi:
            raise ConfigError(f"lambda_range must be increasing, got {lambda_range!r}")
        model = replace(model, lambda_range=(lo, hi))
    return model


# noise coefficients Phi(x, lam)


def _mode_field(grid: QuadratureGrid, mode: int) -> ScalarField:
    mode = int(mode)
    basis = build_basis(grid.spec, grid, mode + 1)
    coeffs = np.zeros(mode + 1)
    coeffs[mode] = 1.0
    return ScalarField.from_basis(basis, coeffs)


def zero_noise(grid: QuadratureGrid) -> Tuple[NoiseTerm, ...]:
    return ((Profile.zero(), ScalarField.constant(grid, 0.0)),)


def additive_mode(grid: QuadratureGrid, sigma: float = 0.3, mode: int = 1) -> Tuple[NoiseTerm, ...]:
    """Phi = sigma e_mode(x), independent of lam."""
    return ((Profile.constant(sigma), _mode_field(grid, mode)),)


def multiplicative_bounded(
    grid: QuadratureGrid, sigma: float = 0.3, radius: float = 2.0, mode: int = 1
) -> Tuple[NoiseTerm, ...]:
    """Phi = sigma lam cutoff(lam) psi(x), compactly supported in lam, psi = 1 + e_mode / (2 sup|e_mode|)."""
    e = _mode_field(grid, mode)
    peak = float(np.abs(e.values).max())
    psi = ScalarField.constant(grid, 1.0) + e.scaled(0.5 / peak)
    cutoff = Profile.cutoff_linear(radius)
    scaled = Profile(f"{sigma:g}*{cutoff.name}", lambda lam: sigma * cutoff.value(lam),
                     lambda lam: sigma * cutoff.d1(lam), lambda lam: sigma * cutoff.d2(lam))
    return ((scaled, psi),)


NOISES: Dict[str, Callable[..., Tuple[NoiseTerm, ...]]] = {
    "zero": zero_noise,
    "additive_mode": additive_mode,
    "multiplicative_bounded": multiplicative_bounded,
}


def attach_noise(model: CoefficientModel, name: str, params: Optional[Mapping[str, float]] = None) -> CoefficientModel:
    try:
        builder = NOISES[name]
    except KeyError:
        raise ConfigError(f"unknown noise coefficient {name!r}; expected one of {sorted(NOISES)}")
    try:
        terms = builder(model.grid, **dict(params or {}))
    except TypeError as exc:
        raise ConfigError(f"bad parameters for noise {name!r}: {exc}")
    return model.with_noise(terms)
