"""
Built-in compact manifolds, chart data and volume-weighted quadrature grids.

Three manifolds are supported, each covered by a single chart:

    torus1   flat circle of period L, coordinate x in [0, L)
    torus2   flat torus with periods (L1, L2), coordinates (x, y)
    sphere2  unit sphere, coordinates (theta, phi): colatitude and azimuth

Sphere nodes are Gauss-Legendre in cos(theta), so no node sits on a pole and
every tensor component in the spherical chart is finite at the nodes.
"""

import math
from dataclasses import dataclass
from enum import Enum
from typing import Sequence, Tuple, Union

import numpy as np
import structlog
from scipy.special import roots_legendre

from core.errors import InvalidResolution, LengthMismatch

log = structlog.get_logger(__name__)

MIN_AXIS_NODES = 4


class ManifoldKind(str, Enum):
    TORUS1 = "torus1"
    TORUS2 = "torus2"
    SPHERE2 = "sphere2"


@dataclass(frozen=True)
class ManifoldSpec:
    kind: ManifoldKind
    periods: Tuple[float, ...] = ()

    def __post_init__(self):
        kind = ManifoldKind(self.kind)
        object.__setattr__(self, "kind", kind)
        if kind is ManifoldKind.SPHERE2:
            object.__setattr__(self, "periods", ())
            return
        expected = 1 if kind is ManifoldKind.TORUS1 else 2
        periods = tuple(float(p) for p in self.periods) or (2.0 * math.pi,) * expected
        if len(periods) != expected or any(not math.isfinite(p) or p <= 0 for p in periods):
            raise InvalidResolution(f"{kind.value} needs {expected} positive period(s), got {self.periods!r}")
        object.__setattr__(self, "periods", periods)

    @classmethod
    def torus1(cls, period: float = 2.0 * math.pi) -> "ManifoldSpec":
        return cls(ManifoldKind.TORUS1, (period,))

    @classmethod
    def torus2(cls, periods: Tuple[float, float] = (2.0 * math.pi, 2.0 * math.pi)) -> "ManifoldSpec":
        return cls(ManifoldKind.TORUS2, tuple(periods))

    @classmethod
    def sphere2(cls) -> "ManifoldSpec":
        return cls(ManifoldKind.SPHERE2)

    @property
    def dimension(self) -> int:
        return 1 if self.kind is ManifoldKind.TORUS1 else 2

    @property
    def is_flat(self) -> bool:
        return self.kind is not ManifoldKind.SPHERE2

    @property
    def analytic_volume(self) -> float:
        if self.kind is ManifoldKind.SPHERE2:
            return 4.0 * math.pi
        return float(np.prod(self.periods))

    @property
    def label(self) -> str:
        if self.kind is ManifoldKind.SPHERE2:
            return "sphere2"
        return f"{self.kind.value}({','.join(f'{p:.12g}' for p in self.periods)})"


@dataclass(frozen=True, eq=False)
class QuadratureGrid:
    """
    Quadrature nodes with chart tensors evaluated per node.

    Index conventions (node axis first):
        metric[n, i, j]                 g_ij
        inverse_metric[n, i, j]         g^ij
        inverse_metric_d1[n, k, i, j]   d_k g^ij
        christoffel[n, i, j, k]         Gamma^i_jk
        christoffel_d1[n, l, i, j, k]   d_l Gamma^i_jk
    """

    spec: ManifoldSpec
    shape: Tuple[int, ...]
    nodes: np.ndarray
    weights: np.ndarray
    metric: np.ndarray
    inverse_metric: np.ndarray
    inverse_metric_d1: np.ndarray
    christoffel: np.ndarray
    christoffel_d1: np.ndarray

    @property
    def n_nodes(self) -> int:
        return self.weights.shape[0]

    @property
    def dimension(self) -> int:
        return self.spec.dimension

    @property
    def metric_determinant(self) -> np.ndarray:
        return np.linalg.det(self.metric)


def _freeze(*arrays: np.ndarray) -> None:
    for a in arrays:
        a.setflags(write=False)


def _normalize_resolution(spec: ManifoldSpec, resolution: Union[int, Sequence[int]]) -> Tuple[int, ...]:
    if isinstance(resolution, (int, np.integer)):
        r = int(resolution)
        counts = (r, 2 * r) if spec.kind is ManifoldKind.SPHERE2 else (r,) * spec.dimension
    else:
        counts = tuple(int(r) for r in resolution)
    if len(counts) != spec.dimension:
        raise InvalidResolution(f"{spec.label} needs {spec.dimension} axis counts, got {counts}")
    if any(c < MIN_AXIS_NODES for c in counts):
        raise InvalidResolution(f"every axis needs at least {MIN_AXIS_NODES} nodes, got {counts}")
    return counts


def build_grid(spec: ManifoldSpec, resolution: Union[int, Sequence[int]]) -> QuadratureGrid:
    """Trapezoidal rule on tori, Gauss-Legendre in cos(theta) times uniform phi on the sphere."""
    counts = _normalize_resolution(spec, resolution)
    d = spec.dimension

    if spec.kind is ManifoldKind.SPHERE2:
        n_theta, n_phi = counts
        mu, w_mu = roots_legendre(n_theta)
        # ascending colatitude, north to south
        order = np.argsort(-mu)
        theta_axis = np.arccos(mu[order])
        w_theta = w_mu[order]
        phi_axis = 2.0 * np.pi * np.arange(n_phi) / n_phi
        theta, phi = np.meshgrid(theta_axis, phi_axis, indexing="ij")
        nodes = np.stack([theta.ravel(), phi.ravel()], axis=-1)
        weights = np.outer(w_theta, np.full(n_phi, 2.0 * np.pi / n_phi)).ravel()

        s = np.sin(nodes[:, 0])
        c = np.cos(nodes[:, 0])
        N = nodes.shape[0]
        metric = np.zeros((N, 2, 2))
        metric[:, 0, 0] = 1.0
        metric[:, 1, 1] = s**2
        inverse_metric = np.zeros((N, 2, 2))
        inverse_metric[:, 0, 0] = 1.0
        inverse_metric[:, 1, 1] = 1.0 / s**2
        inverse_metric_d1 = np.zeros((N, 2, 2, 2))
        inverse_metric_d1[:, 0, 1, 1] = -2.0 * c / s**3
        christoffel = np.zeros((N, 2, 2, 2))
        christoffel[:, 0, 1, 1] = -s * c
        christoffel[:, 1, 0, 1] = c / s
        christoffel[:, 1, 1, 0] = c / s
        christoffel_d1 = np.zeros((N, 2, 2, 2, 2))
        christoffel_d1[:, 0, 0, 1, 1] = -np.cos(2.0 * nodes[:, 0])
        christoffel_d1[:, 0, 1, 0, 1] = -1.0 / s**2
        christoffel_d1[:, 0, 1, 1, 0] = -1.0 / s**2
    else:
        axes = [np.asarray(L * np.arange(n) / n) for L, n in zip(spec.periods, counts)]
        mesh = np.meshgrid(*axes, indexing="ij")
        nodes = np.stack([m.ravel() for m in mesh], axis=-1)
        N = nodes.shape[0]
        weights = np.full(N, spec.analytic_volume / N)
        metric = np.broadcast_to(np.eye(d), (N, d, d)).copy()
        inverse_metric = metric.copy()
        inverse_metric_d1 = np.zeros((N, d, d, d))
        christoffel = np.zeros((N, d, d, d))
        christoffel_d1 = np.zeros((N, d, d, d, d))

    _freeze(nodes, weights, metric, inverse_metric, inverse_metric_d1, christoffel, christoffel_d1)
    grid = QuadratureGrid(
        spec=spec,
        shape=counts,
        nodes=nodes,
        weights=weights,
        metric=metric,
        inverse_metric=inverse_metric,
        inverse_metric_d1=inverse_metric_d1,
        christoffel=christoffel,
        christoffel_d1=christoffel_d1,
    )
    log.debug("grid.built", manifold=spec.label, shape=counts, nodes=grid.n_nodes)
    return grid


def integrate(grid: QuadratureGrid, samples) -> Union[float, np.ndarray]:
    """Quadrature sum over the last axis; leading axes are treated as a batch."""
    samples = np.asarray(samples, dtype=float)
    if samples.shape[-1] != grid.n_nodes:
        raise LengthMismatch(f"expected {grid.n_nodes} samples per field, got {samples.shape[-1]}")
    result = samples @ grid.weights
    return float(result) if np.ndim(result) == 0 else result


def raise_index(grid: QuadratureGrid, covector: np.ndarray) -> np.ndarray:
    """omega_j -> g^ij omega_j, node axis second to last."""
    return np.einsum("nij,...nj->...ni", grid.inverse_metric, covector)


def lower_index(grid: QuadratureGrid, vector: np.ndarray) -> np.ndarray:
    return np.einsum("nij,...nj->...ni", grid.metric, vector)


def mixed_hessian(grid: QuadratureGrid, d1: np.ndarray, d2: np.ndarray) -> np.ndarray:
    """(1,1) Hessian components nabla^a nabla_b f from chart partials of f."""
    covariant = d2 - np.einsum("nkab,...nk->...nab", grid.christoffel, d1)
    return np.einsum("nac,...ncb->...nab", grid.inverse_metric, covariant)


def norm_sq_vector(grid: QuadratureGrid, vector: np.ndarray) -> np.ndarray:
    """Pointwise g(X, X)."""
    return np.einsum("nij,...ni,...nj->...n", grid.metric, vector, vector)


def norm_sq_oneform(grid: QuadratureGrid, covector: np.ndarray) -> np.ndarray:
    return np.einsum("nij,...ni,...nj->...n", grid.inverse_metric, covector, covector)
