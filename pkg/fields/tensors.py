"""
Sampled tensor fields with chart partials.

Node axis first, derivative axes next, component axes last:

    ScalarField   values[n]       d1[n, k]          d2[n, k, l]
    VectorField   comps[n, i]     d1[n, k, i]       d2[n, k, l, i]      X^i
    OneForm       comps[n, i]     d1[n, k, i]                          w_i
    TensorField   comps[n, a, b]  d1[n, k, a, b]    d2[n, k, l, a, b]   T^a_b
"""

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from geometry.manifolds import ManifoldKind, QuadratureGrid


def _expand(a: np.ndarray, rank: int) -> np.ndarray:
    return a.reshape(a.shape + (1,) * rank)


def _product_rule(s: "ScalarField", comps, d1, d2, rank: int):
    values = _expand(s.values, rank) * comps
    out_d1 = out_d2 = None
    if s.d1 is not None and d1 is not None:
        out_d1 = _expand(s.d1, rank) * comps[:, None] + _expand(s.values, rank + 1) * d1
        if s.d2 is not None and d2 is not None:
            sd1 = _expand(s.d1, rank)
            out_d2 = (
                _expand(s.d2, rank) * comps[:, None, None]
                + sd1[:, :, None] * d1[:, None, :]
                + sd1[:, None, :] * d1[:, :, None]
                + _expand(s.values, rank + 2) * d2
            )
    return values, out_d1, out_d2


def _sum_optional(a, b):
    if a is None or b is None:
        return None
    return a + b


@dataclass(frozen=True, eq=False)
class ScalarField:
    values: np.ndarray
    d1: Optional[np.ndarray] = None
    d2: Optional[np.ndarray] = None

    @classmethod
    def constant(cls, grid: QuadratureGrid, value: float) -> "ScalarField":
        N, d = grid.n_nodes, grid.dimension
        return cls(np.full(N, float(value)), np.zeros((N, d)), np.zeros((N, d, d)))

    @classmethod
    def from_basis(cls, basis, coeffs) -> "ScalarField":
        """Combination of tabulated eigenfunctions, partials included."""
        coeffs = np.asarray(coeffs, dtype=float)
        return cls(
            np.einsum("k,kn->n", coeffs, basis.values),
            np.einsum("k,kni->ni", coeffs, basis.partials),
            np.einsum("k,knij->nij", coeffs, basis.second_partials),
        )

    @classmethod
    def coordinate_wave(cls, grid: QuadratureGrid, axis: int, wavenumber: float, phase: str = "cos") -> "ScalarField":
        """cos(k x_axis) or sin(k x_axis) in chart coordinates."""
        x = grid.nodes[:, axis]
        N, d = grid.n_nodes, grid.dimension
        c, s = np.cos(wavenumber * x), np.sin(wavenumber * x)
        value, slope = (c, -wavenumber * s) if phase == "cos" else (s, wavenumber * c)
        d1 = np.zeros((N, d))
        d1[:, axis] = slope
        d2 = np.zeros((N, d, d))
        d2[:, axis, axis] = -(wavenumber**2) * value
        return cls(value, d1, d2)

    def __add__(self, other: "ScalarField") -> "ScalarField":
        return ScalarField(self.values + other.values, _sum_optional(self.d1, other.d1), _sum_optional(self.d2, other.d2))

    def __mul__(self, other: "ScalarField") -> "ScalarField":
        values, d1, d2 = _product_rule(self, other.values, other.d1, other.d2, 0)
        return ScalarField(values, d1, d2)

    def scaled(self, factor: float) -> "ScalarField":
        return ScalarField(
            factor * self.values,
            None if self.d1 is None else factor * self.d1,
            None if self.d2 is None else factor * self.d2,
        )


@dataclass(frozen=True, eq=False)
class VectorField:
    comps: np.ndarray
    d1: Optional[np.ndarray] = None
    d2: Optional[np.ndarray] = None

    @classmethod
    def constant(cls, grid: QuadratureGrid, comps: Sequence[float]) -> "VectorField":
        N, d = grid.n_nodes, grid.dimension
        c = np.broadcast_to(np.asarray(comps, dtype=float), (N, d)).copy()
        return cls(c, np.zeros((N, d, d)), np.zeros((N, d, d, d)))

    @classmethod
    def shear_flow(cls, grid: QuadratureGrid) -> "VectorField":
        """(sin y, sin x) on a flat 2-torus, divergence free."""
        kx, ky = (2.0 * np.pi / L for L in grid.spec.periods)
        x, y = grid.nodes[:, 0], grid.nodes[:, 1]
        N = grid.n_nodes
        comps = np.stack([np.sin(ky * y), np.sin(kx * x)], axis=-1)
        d1 = np.zeros((N, 2, 2))
        d1[:, 1, 0] = ky * np.cos(ky * y)
        d1[:, 0, 1] = kx * np.cos(kx * x)
        d2 = np.zeros((N, 2, 2, 2))
        d2[:, 1, 1, 0] = -(ky**2) * np.sin(ky * y)
        d2[:, 0, 0, 1] = -(kx**2) * np.sin(kx * x)
        return cls(comps, d1, d2)

    @classmethod
    def axis_wave(cls, grid: QuadratureGrid, wavenumber: float = 1.0) -> "VectorField":
        """sin(k x) d/dx, the first chart axis only."""
        s = ScalarField.coordinate_wave(grid, 0, wavenumber, "sin")
        return cls.constant(grid, np.eye(grid.dimension)[0]).scaled(s)

    @classmethod
    def polar_gradient(cls, grid: QuadratureGrid) -> "VectorField":
        """grad z = -sin(theta) d/dtheta on the unit sphere, z = cos(theta)."""
        _require_sphere(grid)
        s, c = np.sin(grid.nodes[:, 0]), np.cos(grid.nodes[:, 0])
        N = grid.n_nodes
        comps = np.zeros((N, 2))
        comps[:, 0] = -s
        d1 = np.zeros((N, 2, 2))
        d1[:, 0, 0] = -c
        d2 = np.zeros((N, 2, 2, 2))
        d2[:, 0, 0, 0] = s
        return cls(comps, d1, d2)

    def scaled(self, s: ScalarField) -> "VectorField":
        return VectorField(*_product_rule(s, self.comps, self.d1, self.d2, 1))

    def __add__(self, other: "VectorField") -> "VectorField":
        return VectorField(self.comps + other.comps, _sum_optional(self.d1, other.d1), _sum_optional(self.d2, other.d2))


@dataclass(frozen=True, eq=False)
class OneForm:
    comps: np.ndarray
    d1: Optional[np.ndarray] = None

    @classmethod
    def differential(cls, f: ScalarField) -> "OneForm":
        return cls(f.d1, f.d2)

    def sharp(self, grid: QuadratureGrid) -> VectorField:
        """Raise the index, X^i = g^ij w_j, carrying first partials."""
        comps = np.einsum("nij,nj->ni", grid.inverse_metric, self.comps)
        d1 = None
        if self.d1 is not None:
            d1 = np.einsum("nkij,nj->nki", grid.inverse_metric_d1, self.comps) + np.einsum(
                "nij,nkj->nki", grid.inverse_metric, self.d1
            )
        return VectorField(comps, d1)


@dataclass(frozen=True, eq=False)
class TensorField:
    comps: np.ndarray
    d1: Optional[np.ndarray] = None
    d2: Optional[np.ndarray] = None

    @classmethod
    def identity(cls, grid: QuadratureGrid) -> "TensorField":
        return cls.constant(grid, np.eye(grid.dimension))

    @classmethod
    def constant(cls, grid: QuadratureGrid, matrix) -> "TensorField":
        N, d = grid.n_nodes, grid.dimension
        c = np.broadcast_to(np.asarray(matrix, dtype=float), (N, d, d)).copy()
        return cls(c, np.zeros((N, d, d, d)), np.zeros((N, d, d, d, d)))

    @classmethod
    def unit(cls, grid: QuadratureGrid, a: int, b: int) -> "TensorField":
        m = np.zeros((grid.dimension, grid.dimension))
        m[a, b] = 1.0
        return cls.constant(grid, m)

    @classmethod
    def sphere_frame(cls, grid: QuadratureGrid, name: str) -> "TensorField":
        """
        Globally smooth (1,1) tensors on the unit sphere, K = d/dphi and z = cos(theta):

            killing      K (x) K_flat      ^phi_phi   = sin^2
            polar        grad z (x) dz     ^theta_theta = sin^2
            twist        K (x) dz          ^phi_theta = -sin
            twist_t      grad z (x) K_flat ^theta_phi = -sin^3
        """
        _require_sphere(grid)
        s, c = np.sin(grid.nodes[:, 0]), np.cos(grid.nodes[:, 0])
        N = grid.n_nodes
        comps = np.zeros((N, 2, 2))
        d1 = np.zeros((N, 2, 2, 2))
        d2 = np.zeros((N, 2, 2, 2, 2))
        if name in ("killing", "polar"):
            a = 1 if name == "killing" else 0
            comps[:, a, a] = s**2
            d1[:, 0, a, a] = 2.0 * s * c
            d2[:, 0, 0, a, a] = 2.0 * np.cos(2.0 * grid.nodes[:, 0])
        elif name == "twist":
            comps[:, 1, 0] = -s
            d1[:, 0, 1, 0] = -c
            d2[:, 0, 0, 1, 0] = s
        elif name == "twist_t":
            comps[:, 0, 1] = -(s**3)
            d1[:, 0, 0, 1] = -3.0 * s**2 * c
            d2[:, 0, 0, 0, 1] = -6.0 * s * c**2 + 3.0 * s**3
        else:
            raise ValueError(f"unknown sphere frame {name!r}")
        return cls(comps, d1, d2)

    def scaled(self, s: ScalarField) -> "TensorField":
        return TensorField(*_product_rule(s, self.comps, self.d1, self.d2, 2))

    def times(self, factor: float) -> "TensorField":
        return TensorField(
            factor * self.comps,
            None if self.d1 is None else factor * self.d1,
            None if self.d2 is None else factor * self.d2,
        )

    def __add__(self, other: "TensorField") -> "TensorField":
        return TensorField(self.comps + other.comps, _sum_optional(self.d1, other.d1), _sum_optional(self.d2, other.d2))

    def trace_against(self, other: np.ndarray) -> np.ndarray:
        """tr(T o H) = T^a_b H^b_a per node."""
        return np.einsum("...nab,...nba->...n", self.comps, other)


def _require_sphere(grid: QuadratureGrid) -> None:
    if grid.spec.kind is not ManifoldKind.SPHERE2:
        raise ValueError(f"field is defined on the sphere only, not on {grid.spec.label}")
