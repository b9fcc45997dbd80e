"""
Coefficient models: flux f_x(lam), diffusion A_x(lam) and noise Phi(x, lam).

Every model is a finite sum of separable terms p(lam) * F(x), where p is a
Profile with closed-form lam-derivatives and F a sampled field with chart
partials. That keeps the chain rule along a solution sample exact.
"""

import math
from dataclasses import dataclass, field, replace
from functools import cached_property
from typing import Callable, Dict, Optional, Sequence, Tuple

import numpy as np
import structlog

from core.errors import MissingNoise, QuadratureFailure
from fields.operators import div_div, div_tensor, div_vector
from fields.tensors import ScalarField, TensorField, VectorField
from geometry.manifolds import QuadratureGrid, norm_sq_oneform, norm_sq_vector

log = structlog.get_logger(__name__)

ArrayFn = Callable[[np.ndarray], np.ndarray]


def _smoothstep(t):
    return t**3 * (10.0 - 15.0 * t + 6.0 * t**2)


def _smoothstep_d1(t):
    return 30.0 * t**2 * (1.0 - t) ** 2


def _smoothstep_d2(t):
    return 60.0 * t * (1.0 - t) * (1.0 - 2.0 * t)


@dataclass(frozen=True, eq=False)
class Profile:
    """Scalar map of lam with its first two derivatives, vectorized over arrays."""

    name: str
    value: ArrayFn
    d1: ArrayFn
    d2: ArrayFn
    linear: bool = False
    constant_value: Optional[float] = None

    def __call__(self, lam):
        return self.value(np.asarray(lam, dtype=float))

    @classmethod
    def linear_map(cls, slope: float = 1.0) -> "Profile":
        return cls(
            f"{slope:g}*lam",
            lambda lam: slope * lam,
            lambda lam: np.full_like(lam, slope),
            np.zeros_like,
            linear=True,
        )

    @classmethod
    def constant(cls, c: float) -> "Profile":
        return cls(f"{c:g}", lambda lam: np.full_like(lam, c), np.zeros_like, np.zeros_like, constant_value=float(c))

    @classmethod
    def zero(cls) -> "Profile":
        return cls.constant(0.0)

    @classmethod
    def power(cls, p: int, coef: float = 1.0) -> "Profile":
        if p == 1:
            return cls.linear_map(coef)
        return cls(
            f"{coef:g}*lam^{p}",
            lambda lam: coef * lam**p,
            lambda lam: coef * p * lam ** (p - 1),
            lambda lam: coef * p * (p - 1) * lam ** (p - 2),
        )

    @classmethod
    def tanh(cls, coef: float = 1.0) -> "Profile":
        def d1(lam):
            return coef / np.cosh(lam) ** 2

        return cls(f"{coef:g}*tanh", lambda lam: coef * np.tanh(lam), d1, lambda lam: -2.0 * np.tanh(lam) * d1(lam))

    @classmethod
    def tanh_boosted(cls, beta: float) -> "Profile":
        """lam + beta tanh(lam); derivative in [1, 1 + beta] for beta >= 0."""
        return cls(
            f"lam+{beta:g}*tanh",
            lambda lam: lam + beta * np.tanh(lam),
            lambda lam: 1.0 + beta / np.cosh(lam) ** 2,
            lambda lam: -2.0 * beta * np.tanh(lam) / np.cosh(lam) ** 2,
        )

    @classmethod
    def sine(cls, coef: float = 1.0) -> "Profile":
        return cls(
            f"{coef:g}*sin",
            lambda lam: coef * np.sin(lam),
            lambda lam: coef * np.cos(lam),
            lambda lam: -coef * np.sin(lam),
        )

    @classmethod
    def cutoff_linear(cls, radius: float) -> "Profile":
        """lam * c(lam) with c = 1 on |lam| <= r, c = 0 on |lam| >= 2r, C2 quintic blend between."""

        def parts(lam):
            a = np.abs(lam)
            t = np.clip((a - radius) / radius, 0.0, 1.0)
            c = 1.0 - _smoothstep(t)
            inside = (a > radius) & (a < 2.0 * radius)
            c1 = np.where(inside, -_smoothstep_d1(t) / radius * np.sign(lam), 0.0)
            c2 = np.where(inside, -_smoothstep_d2(t) / radius**2, 0.0)
            return c, c1, c2

        def value(lam):
            return lam * parts(lam)[0]

        def d1(lam):
            c, c1, _ = parts(lam)
            return c + lam * c1

        def d2(lam):
            _, c1, c2 = parts(lam)
            return 2.0 * c1 + lam * c2

        return cls(f"lam*cutoff({radius:g})", value, d1, d2)

    @classmethod
    def antiderivative(cls, integrand: "Profile", tol: float = 1e-10, max_depth: int = 40) -> "Profile":
        """P(lam) = int_0^lam a(z) dz by adaptive Simpson; P' = a and P'' = a' are exact."""
        if integrand.constant_value is not None:
            return cls.linear_map(integrand.constant_value)

        def scalar_fn(z: float) -> float:
            return float(integrand.value(np.asarray(z, dtype=float)))

        def value(lam):
            lam = np.asarray(lam, dtype=float)
            uniq, inverse = np.unique(lam, return_inverse=True)
            table = np.array([adaptive_simpson(scalar_fn, 0.0, float(b), tol, max_depth) for b in uniq])
            return table[inverse].reshape(lam.shape)

        return cls(f"int({integrand.name})", value, integrand.value, integrand.d1)

    def compose(self, inner: "Profile") -> "Profile":
        """(self o inner)(lam) with the chain rule."""

        def d1(lam):
            return self.d1(inner.value(lam)) * inner.d1(lam)

        def d2(lam):
            x = inner.value(lam)
            return self.d2(x) * inner.d1(lam) ** 2 + self.d1(x) * inner.d2(lam)

        return Profile(f"{self.name}o{inner.name}", lambda lam: self.value(inner.value(lam)), d1, d2)

    def along(self, u: ScalarField) -> ScalarField:
        """p(u(x)) as a scalar field, partials through the chain rule."""
        p1 = self.d1(u.values)
        d1 = d2 = None
        if u.d1 is not None:
            d1 = p1[:, None] * u.d1
            if u.d2 is not None:
                d2 = self.d2(u.values)[:, None, None] * u.d1[:, :, None] * u.d1[:, None, :] + p1[:, None, None] * u.d2
        return ScalarField(self.value(u.values), d1, d2)


def adaptive_simpson(f: Callable[[float], float], a: float, b: float, tol: float = 1e-10, max_depth: int = 40) -> float:
    if a == b:
        return 0.0
    m = 0.5 * (a + b)
    fa, fm, fb = f(a), f(m), f(b)
    whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb)
    return _simpson_step(f, a, b, fa, fm, fb, whole, tol, max_depth)


def _simpson_step(f, a, b, fa, fm, fb, whole, tol, depth):
    m = 0.5 * (a + b)
    lm, rm = 0.5 * (a + m), 0.5 * (m + b)
    flm, frm = f(lm), f(rm)
    left = (m - a) / 6.0 * (fa + 4.0 * flm + fm)
    right = (b - m) / 6.0 * (fm + 4.0 * frm + fb)
    delta = left + right - whole
    if abs(delta) <= 15.0 * tol:
        return left + right + delta / 15.0
    if depth <= 0:
        raise QuadratureFailure(f"adaptive Simpson did not reach {tol:.1e} on [{a:.6g}, {b:.6g}]")
    return _simpson_step(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1) + _simpson_step(
        f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1
    )


def _blend(t):
    # G(0) = 0, G'(0) = 1, G'(1) = G''(0) = G''(1) = 0, G(1) = 1/2
    return t - (t**6 - 3.0 * t**5 + 2.5 * t**4)


def _chi_parts(lam):
    lam = np.asarray(lam, dtype=float)
    upper = np.clip(lam - 1.0, 0.0, 1.0)
    lower = np.clip(-lam, 0.0, 1.0)
    value = np.where(lam > 1.0, 1.0 + _blend(upper), np.where(lam < 0.0, -_blend(lower), lam))
    d1 = np.where(lam > 1.0, 1.0 - _smoothstep(upper), np.where(lam < 0.0, 1.0 - _smoothstep(lower), 1.0))
    d2 = np.where(lam > 1.0, -_smoothstep_d1(upper), np.where(lam < 0.0, _smoothstep_d1(lower), 0.0))
    return value, d1, d2


CHI = Profile(
    "chi",
    lambda lam: _chi_parts(lam)[0],
    lambda lam: _chi_parts(lam)[1],
    lambda lam: _chi_parts(lam)[2],
)

FluxTerm = Tuple[Profile, VectorField]
DiffusionTerm = Tuple[Profile, TensorField]
NoiseTerm = Tuple[Profile, ScalarField]


def _tensor_norm_sq(grid: QuadratureGrid, T: np.ndarray) -> np.ndarray:
    """g_ac g^bd T^a_b T^c_d."""
    return np.einsum("nac,nbd,...nab,...ncd->...n", grid.metric, grid.inverse_metric, T, T)


@dataclass(frozen=True, eq=False)
class CoefficientModel:
    name: str
    grid: QuadratureGrid
    flux_terms: Tuple[FluxTerm, ...] = ()
    diffusion_terms: Tuple[DiffusionTerm, ...] = ()
    noise_terms: Optional[Tuple[NoiseTerm, ...]] = None
    parabolicity_c: float = 0.0
    growth_C: Optional[float] = None
    lambda_range: Tuple[float, float] = (-1.0, 1.0)
    params: Dict[str, float] = field(default_factory=dict)

    @property
    def dimension(self) -> int:
        return self.grid.dimension

    @property
    def is_linear_diffusion(self) -> bool:
        return all(p.linear for p, _ in self.diffusion_terms)

    @property
    def has_noise(self) -> bool:
        return self.noise_terms is not None

    def lambda_samples(self, count: int = 9) -> np.ndarray:
        lo, hi = self.lambda_range
        return np.linspace(lo, hi, count)

    # pointwise evaluation; lam has shape (..., n_nodes)

    def _vector_sum(self, lam, which: str) -> np.ndarray:
        lam = np.asarray(lam, dtype=float)
        out = np.zeros(lam.shape + (self.dimension,))
        for p, X in self.flux_terms:
            out += getattr(p, which)(lam)[..., None] * X.comps
        return out

    def _tensor_sum(self, lam, which: str) -> np.ndarray:
        lam = np.asarray(lam, dtype=float)
        out = np.zeros(lam.shape + (self.dimension, self.dimension))
        for p, T in self.diffusion_terms:
            out += getattr(p, which)(lam)[..., None, None] * T.comps
        return out

    def flux(self, lam) -> np.ndarray:
        return self._vector_sum(lam, "value")

    def flux_dlam(self, lam) -> np.ndarray:
        return self._vector_sum(lam, "d1")

    def diffusion(self, lam) -> np.ndarray:
        return self._tensor_sum(lam, "value")

    def diffusion_dlam(self, lam) -> np.ndarray:
        return self._tensor_sum(lam, "d1")

    def diffusion_dlamlam(self, lam) -> np.ndarray:
        return self._tensor_sum(lam, "d2")

    def noise(self, lam) -> np.ndarray:
        if self.noise_terms is None:
            raise MissingNoise(f"model {self.name!r} has no noise coefficient")
        lam = np.asarray(lam, dtype=float)
        out = np.zeros(lam.shape)
        for p, psi in self.noise_terms:
            out += p.value(lam) * psi.values
        return out

    # x-derivatives with lam frozen

    @cached_property
    def _flux_divergences(self) -> Tuple[np.ndarray, ...]:
        return tuple(div_vector(self.grid, X) for _, X in self.flux_terms)

    @cached_property
    def _tensor_divergences(self) -> Tuple[np.ndarray, ...]:
        return tuple(div_tensor(self.grid, T).comps for _, T in self.diffusion_terms)

    @cached_property
    def _tensor_double_divergences(self) -> Tuple[np.ndarray, ...]:
        return tuple(div_div(self.grid, T) for _, T in self.diffusion_terms)

    def div_flux_frozen(self, lam) -> np.ndarray:
        lam = np.asarray(lam, dtype=float)
        out = np.zeros(lam.shape)
        for (p, _), div in zip(self.flux_terms, self._flux_divergences):
            out += p.value(lam) * div
        return out

    def div_diffusion_frozen(self, lam) -> np.ndarray:
        """Div_x A(., lam) as one-form components."""
        lam = np.asarray(lam, dtype=float)
        out = np.zeros(lam.shape + (self.dimension,))
        for (p, _), div in zip(self.diffusion_terms, self._tensor_divergences):
            out += p.value(lam)[..., None] * div
        return out

    def divdiv_frozen(self, lam) -> np.ndarray:
        lam = np.asarray(lam, dtype=float)
        out = np.zeros(lam.shape)
        for (p, _), dd in zip(self.diffusion_terms, self._tensor_double_divergences):
            out += p.value(lam) * dd
        return out

    # fields along a solution sample u(x)

    def flux_along(self, u: ScalarField) -> VectorField:
        out = VectorField.constant(self.grid, np.zeros(self.dimension))
        for p, X in self.flux_terms:
            out = out + X.scaled(p.along(u))
        return out

    def tensor_along(self, u: ScalarField) -> TensorField:
        out = TensorField.constant(self.grid, np.zeros((self.dimension, self.dimension)))
        for p, T in self.diffusion_terms:
            out = out + T.scaled(p.along(u))
        return out

    def growth_norms(self, lam_samples: Sequence[float]) -> np.ndarray:
        """sup_x |f| + |A| + |lam A'| + |Div A| per lam sample."""
        lam = np.repeat(np.asarray(lam_samples, dtype=float)[:, None], self.grid.n_nodes, axis=1)
        f = np.sqrt(norm_sq_vector(self.grid, self.flux(lam)))
        A = np.sqrt(_tensor_norm_sq(self.grid, self.diffusion(lam)))
        lam_dA = np.abs(lam) * np.sqrt(_tensor_norm_sq(self.grid, self.diffusion_dlam(lam)))
        div_A = np.sqrt(norm_sq_oneform(self.grid, self.div_diffusion_frozen(lam)))
        return f.max(axis=1) + A.max(axis=1) + lam_dA.max(axis=1) + div_A.max(axis=1)

    def with_noise(self, terms: Sequence[NoiseTerm]) -> "CoefficientModel":
        return replace(self, noise_terms=tuple(terms))

    def describe(self) -> Dict[str, object]:
        return {
            "name": self.name,
            "linear_diffusion": self.is_linear_diffusion,
            "parabolicity_c": self.parabolicity_c,
            "growth_C": self.growth_C,
            "lambda_range": list(self.lambda_range),
            "flux": [p.name for p, _ in self.flux_terms],
            "diffusion": [p.name for p, _ in self.diffusion_terms],
            "noise": None if self.noise_terms is None else [p.name for p, _ in self.noise_terms],
            "params": dict(self.params),
        }


@dataclass(frozen=True, eq=False)
class TruncatedModel(CoefficientModel):
    base: Optional[CoefficientModel] = None
    chi: Profile = CHI


def truncate(model: CoefficientModel, chi: Profile = CHI) -> TruncatedModel:
    """f~(lam) = f(chi(lam)), A~(lam) = A(chi(lam)); the noise coefficient is kept as is."""
    flux = tuple((p.compose(chi), X) for p, X in model.flux_terms)
    diffusion = tuple((p.compose(chi), T) for p, T in model.diffusion_terms)

    # chi maps R into [chi(-1), chi(2)], so the bound is a sup over that image
    image = np.linspace(float(chi(-1.0)), float(chi(2.0)), 33)
    base_terms = model.growth_norms(image).max()
    lam = np.linspace(-1.0, 2.0, 61)
    slopes = np.abs(lam * chi.d1(lam))
    lam_nodes = np.repeat(chi(lam)[:, None], model.grid.n_nodes, axis=1)
    dA = np.sqrt(_tensor_norm_sq(model.grid, model.diffusion_dlam(lam_nodes))).max(axis=1)
    growth = float(base_terms + (slopes * dA).max())

    truncated = TruncatedModel(
        name=f"truncated({model.name})",
        grid=model.grid,
        flux_terms=flux,
        diffusion_terms=diffusion,
        noise_terms=model.noise_terms,
        parabolicity_c=0.0,
        growth_C=growth,
        lambda_range=(-2.0, 3.0),
        params=dict(model.params),
        base=model,
        chi=chi,
    )
    log.debug("model.truncated", base=model.name, growth_C=growth)
    return truncated


def regularize(model: CoefficientModel, eps: float) -> CoefficientModel:
    """A + eps lam delta, the tensor form of the eps Laplacian."""
    if eps == 0:
        return model
    term = (Profile.linear_map(eps), TensorField.identity(model.grid))
    growth = None if model.growth_C is None else model.growth_C + 2.0 * eps * math.sqrt(model.dimension)
    return replace(
        model,
        name=f"{model.name}+{eps:g}lap",
        diffusion_terms=model.diffusion_terms + (term,),
        parabolicity_c=model.parabolicity_c + eps,
        growth_C=growth,
    )


@dataclass(frozen=True, eq=False)
class StandardForm:
    """Div(a grad u) = DivDiv A(u) - Div g(u) with A = int_0^lam a and g = (Div_x A)^sharp."""

    diffusion_model: CoefficientModel
    correction: Tuple[FluxTerm, ...]

    @property
    def model(self) -> CoefficientModel:
        return replace(
            self.diffusion_model,
            name=f"{self.diffusion_model.name}+correction",
            flux_terms=self.diffusion_model.flux_terms + self.correction,
        )


def from_standard_form(
    grid: QuadratureGrid,
    terms: Sequence[Tuple[Profile, TensorField]],
    name: str = "standard_form",
    parabolicity_c: float = 0.0,
    lambda_range: Tuple[float, float] = (-1.0, 1.0),
    tol: float = 1e-10,
    max_depth: int = 40,
) -> StandardForm:
    """terms are (a_k(lam), T_k(x)) with a(x, lam) = sum a_k(lam) T_k(x)."""
    diffusion = []
    correction = []
    for integrand, T in terms:
        P = Profile.antiderivative(integrand, tol=tol, max_depth=max_depth)
        diffusion.append((P, T))
        correction.append((P, div_tensor(grid, T).sharp(grid)))
    # surface quadrature failures at construction time rather than mid-solve
    for P, _ in diffusion:
        P(np.asarray(lambda_range, dtype=float))
    model = CoefficientModel(
        name=name,
        grid=grid,
        diffusion_terms=tuple(diffusion),
        parabolicity_c=parabolicity_c,
        lambda_range=lambda_range,
    )
    return StandardForm(model, tuple(correction))
