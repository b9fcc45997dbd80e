"""
Laplace-Beltrami eigenbases with closed-form chart derivatives.

Tori use normalized real Fourier modes, the sphere uses real spherical
harmonics. Modes are ordered by eigenvalue of -Delta, ties broken by the
lexicographic order of their integer labels:

    torus1   k            k > 0 cos, k < 0 sin, 0 constant
    torus2   (k1, k2)     canonical half-plane vector -> cos, its negative -> sin
    sphere2  (l, m)       m > 0 cos(m phi), m < 0 sin(|m| phi)
"""

import itertools
import math
from dataclasses import dataclass
from typing import Dict, List, Tuple

import numpy as np
import structlog
from scipy.special import gammaln, lpmv

from core.errors import InvalidResolution, UnderResolved
from geometry.manifolds import MIN_AXIS_NODES, ManifoldKind, ManifoldSpec, QuadratureGrid, mixed_hessian, raise_index

log = structlog.get_logger(__name__)

Label = Tuple[int, ...]


@dataclass(frozen=True, eq=False)
class EigenBasis:
    """
    First n eigenfunctions of -Delta tabulated on a grid.

        values[k, n]                 e_k(node)
        partials[k, n, i]            d_i e_k
        second_partials[k, n, i, j]  d_i d_j e_k
        gradients[k, n, a]           contravariant grad e_k
        hessians[k, n, a, b]         nabla^a nabla_b e_k
    """

    spec: ManifoldSpec
    grid: QuadratureGrid
    mu: np.ndarray
    lam: np.ndarray
    labels: Tuple[Label, ...]
    values: np.ndarray
    partials: np.ndarray
    second_partials: np.ndarray
    gradients: np.ndarray
    hessians: np.ndarray

    @property
    def n(self) -> int:
        return self.mu.shape[0]

    @property
    def basis_id(self) -> str:
        return f"{self.spec.label}/n={self.n}"

    def index_of(self, label: Label) -> int:
        return self.labels.index(tuple(label))

    def gram(self) -> np.ndarray:
        return (self.values * self.grid.weights) @ self.values.T

    def laplacian_values(self) -> np.ndarray:
        """Delta e_k at the nodes, as the trace of the tabulated Hessians."""
        return np.einsum("knaa->kn", self.hessians)

    def metadata(self) -> Dict[str, object]:
        return {
            "basis_id": self.basis_id,
            "n": self.n,
            "mu": self.mu.tolist(),
            "lambda": self.lam.tolist(),
            "labels": [list(l) for l in self.labels],
        }


def _torus_labels(spec: ManifoldSpec, n: int) -> List[Tuple[float, Label]]:
    """Every label with mu up to a cutoff that is doubled until at least n labels qualify."""
    wavenumbers = [2.0 * math.pi / L for L in spec.periods]
    mu_cut = max(wavenumbers) ** 2
    while True:
        # |k_i| w_i <= sqrt(mu_cut) on each axis
        radii = [int(math.floor(math.sqrt(mu_cut) / w)) + 1 for w in wavenumbers]
        candidates = []
        for label in itertools.product(*(range(-r, r + 1) for r in radii)):
            mu = sum((k * w) ** 2 for k, w in zip(label, wavenumbers))
            if mu <= mu_cut:
                candidates.append((mu, tuple(label)))
        if len(candidates) >= n:
            return candidates
        mu_cut *= 2.0


def _sphere_labels(n: int) -> List[Tuple[float, Label]]:
    l_max = int(math.ceil(math.sqrt(n)))
    return [(float(l * (l + 1)), (l, m)) for l in range(l_max + 1) for m in range(-l, l + 1)]


def _is_canonical(label: Label) -> bool:
    for k in label:
        if k != 0:
            return k > 0
    return True


def _torus_mode(spec: ManifoldSpec, grid: QuadratureGrid, label: Label):
    d = spec.dimension
    N = grid.n_nodes
    volume = spec.analytic_volume
    if all(k == 0 for k in label):
        return np.full(N, 1.0 / math.sqrt(volume)), np.zeros((N, d)), np.zeros((N, d, d))
    kw = np.array([k * 2.0 * math.pi / L for k, L in zip(label, spec.periods)])
    amplitude = math.sqrt(2.0 / volume)
    if _is_canonical(label):
        phase = grid.nodes @ kw
        value = amplitude * np.cos(phase)
        d1 = -amplitude * np.sin(phase)[:, None] * kw
    else:
        # sin mode of the canonical vector -label
        kw = -kw
        phase = grid.nodes @ kw
        value = amplitude * np.sin(phase)
        d1 = amplitude * np.cos(phase)[:, None] * kw
    d2 = -value[:, None, None] * np.outer(kw, kw)
    return value, d1, d2


def _sphere_mode(grid: QuadratureGrid, label: Label):
    l, m = label
    am = abs(m)
    theta = grid.nodes[:, 0]
    phi = grid.nodes[:, 1]
    x = np.cos(theta)
    s = np.sin(theta)

    norm = math.sqrt((2 * l + 1) / (4.0 * math.pi) * math.exp(gammaln(l - am + 1) - gammaln(l + am + 1)))
    p_l = lpmv(am, l, x)
    p_lm1 = lpmv(am, l - 1, x) if l - 1 >= am else np.zeros_like(x)
    big_theta = norm * p_l
    # (x^2 - 1) dP_l^m/dx = l x P_l^m - (l + m) P_{l-1}^m, and d/dtheta = -sin(theta) d/dx
    d_theta = norm * (l * x * p_l - (l + am) * p_lm1) / s
    dd_theta = -(x / s) * d_theta - (l * (l + 1) - am**2 / s**2) * big_theta

    if m > 0:
        f, df = math.sqrt(2.0) * np.cos(am * phi), -math.sqrt(2.0) * am * np.sin(am * phi)
    elif m < 0:
        f, df = math.sqrt(2.0) * np.sin(am * phi), math.sqrt(2.0) * am * np.cos(am * phi)
    else:
        f, df = np.ones_like(phi), np.zeros_like(phi)
    ddf = -(am**2) * f

    value = big_theta * f
    d1 = np.stack([d_theta * f, big_theta * df], axis=-1)
    d2 = np.empty((grid.n_nodes, 2, 2))
    d2[:, 0, 0] = dd_theta * f
    d2[:, 0, 1] = d_theta * df
    d2[:, 1, 0] = d_theta * df
    d2[:, 1, 1] = big_theta * ddf
    return value, d1, d2


def _check_resolved(spec: ManifoldSpec, grid: QuadratureGrid, labels: List[Label]) -> None:
    if spec.kind is ManifoldKind.SPHERE2:
        n_theta, n_phi = grid.shape
        l_max = max(l for l, _ in labels)
        m_max = max(abs(m) for _, m in labels)
        if l_max >= n_theta or m_max >= n_phi / 2:
            raise UnderResolved(
                f"degree {l_max} / order {m_max} needs more than {n_theta}x{n_phi} nodes"
            )
        return
    for axis, count in enumerate(grid.shape):
        k_max = max(abs(label[axis]) for label in labels)
        if k_max >= count / 2:
            raise UnderResolved(f"wavenumber {k_max} on axis {axis} needs more than {count} nodes")


def build_basis(spec: ManifoldSpec, grid: QuadratureGrid, n: int) -> EigenBasis:
    if n < 1:
        raise InvalidResolution(f"basis size must be at least 1, got {n}")
    if grid.spec != spec:
        raise InvalidResolution(f"grid was built for {grid.spec.label}, not {spec.label}")

    candidates = _sphere_labels(n) if spec.kind is ManifoldKind.SPHERE2 else _torus_labels(spec, n)
    candidates.sort()
    chosen = candidates[:n]
    labels = [label for _, label in chosen]
    _check_resolved(spec, grid, labels)

    if spec.kind is ManifoldKind.SPHERE2:
        tables = [_sphere_mode(grid, label) for label in labels]
    else:
        tables = [_torus_mode(spec, grid, label) for label in labels]
    values = np.stack([t[0] for t in tables])
    partials = np.stack([t[1] for t in tables])
    second_partials = np.stack([t[2] for t in tables])
    gradients = raise_index(grid, partials)
    hessians = mixed_hessian(grid, partials, second_partials)

    mu = np.array([m for m, _ in chosen])
    lam = np.sqrt(1.0 + mu)
    for a in (mu, lam, values, partials, second_partials, gradients, hessians):
        a.setflags(write=False)

    log.debug("basis.built", manifold=spec.label, n=n, mu_max=float(mu[-1]))
    return EigenBasis(
        spec=spec,
        grid=grid,
        mu=mu,
        lam=lam,
        labels=tuple(labels),
        values=values,
        partials=partials,
        second_partials=second_partials,
        gradients=gradients,
        hessians=hessians,
    )


def _leading_labels(spec: ManifoldSpec, n: int) -> List[Label]:
    candidates = _sphere_labels(n) if spec.kind is ManifoldKind.SPHERE2 else _torus_labels(spec, n)
    candidates.sort()
    return [label for _, label in candidates[:n]]


def dealiased_resolution(spec: ManifoldSpec, n: int) -> Tuple[int, ...]:
    """Node counts that integrate products of three basis modes exactly (quadratic nonlinearities)."""
    if n < 1:
        raise InvalidResolution(f"basis size must be at least 1, got {n}")
    labels = _leading_labels(spec, n)
    if spec.kind is ManifoldKind.SPHERE2:
        l_max = max(l for l, _ in labels)
        n_theta = max(MIN_AXIS_NODES, (3 * l_max) // 2 + 2)
        return n_theta, 2 * n_theta
    counts = []
    for axis in range(spec.dimension):
        k_max = max(abs(label[axis]) for label in labels)
        count = max(MIN_AXIS_NODES, 3 * k_max + 2)
        counts.append(count + count % 2)
    return tuple(counts)
