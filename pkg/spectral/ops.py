"""
Coefficient-space utilities for u_n = sum_k alpha_k e_k.

Norms are evaluated on coefficients: ||u||_s^2 = sum lam_k^(2s) alpha_k^2 with
lam_k = sqrt(1 + mu_k), the symbol of Lambda^s = (I - Delta)^(s/2).
"""

from dataclasses import dataclass
from typing import Optional

import numpy as np

from core.errors import LengthMismatch, ShapeMismatch
from fields.tensors import ScalarField
from geometry.basis import EigenBasis


@dataclass(frozen=True, eq=False)
class SpectralVector:
    coeffs: np.ndarray
    basis_id: str

    def __post_init__(self):
        coeffs = np.asarray(self.coeffs, dtype=float)
        if coeffs.ndim != 1:
            raise ShapeMismatch(f"coefficients must be one-dimensional, got shape {coeffs.shape}")
        if not np.all(np.isfinite(coeffs)):
            raise ValueError("spectral coefficients must be finite")
        object.__setattr__(self, "coeffs", coeffs)

    @property
    def n(self) -> int:
        return self.coeffs.shape[0]

    @classmethod
    def zeros(cls, basis: EigenBasis) -> "SpectralVector":
        return cls(np.zeros(basis.n), basis.basis_id)

    @classmethod
    def unit(cls, basis: EigenBasis, k: int, amplitude: float = 1.0) -> "SpectralVector":
        coeffs = np.zeros(basis.n)
        coeffs[k] = amplitude
        return cls(coeffs, basis.basis_id)

    def __add__(self, other: "SpectralVector") -> "SpectralVector":
        _same_basis(self, other)
        return SpectralVector(self.coeffs + other.coeffs, self.basis_id)

    def __mul__(self, factor: float) -> "SpectralVector":
        return SpectralVector(factor * self.coeffs, self.basis_id)

    __rmul__ = __mul__


def _same_basis(a: SpectralVector, b: SpectralVector) -> None:
    if a.basis_id != b.basis_id:
        raise ShapeMismatch(f"coefficients live on different bases: {a.basis_id} vs {b.basis_id}")


def _check(basis: EigenBasis, v: SpectralVector) -> None:
    if v.n != basis.n:
        raise ShapeMismatch(f"vector has {v.n} coefficients, basis has {basis.n}")


def project(basis: EigenBasis, samples, n: Optional[int] = None) -> SpectralVector:
    """alpha_k = <samples, e_k>_quad for the first n modes."""
    samples = np.asarray(samples, dtype=float)
    if samples.shape[-1] != basis.grid.n_nodes:
        raise LengthMismatch(f"expected {basis.grid.n_nodes} samples, got {samples.shape[-1]}")
    n = basis.n if n is None else n
    if not 1 <= n <= basis.n:
        raise ShapeMismatch(f"cannot project onto {n} modes of a {basis.n}-mode basis")
    coeffs = basis.values[:n] @ (basis.grid.weights * samples)
    return SpectralVector(coeffs, basis.basis_id if n == basis.n else f"{basis.spec.label}/n={n}")


def synthesize(basis: EigenBasis, v: SpectralVector, with_derivatives: bool = False) -> ScalarField:
    """u at the nodes; with derivatives, chart partials too (gradient/hessian via fields.operators)."""
    _check(basis, v)
    a = v.coeffs
    values = a @ basis.values
    if not with_derivatives:
        return ScalarField(values)
    return ScalarField(
        values,
        np.einsum("k,kni->ni", a, basis.partials),
        np.einsum("k,knij->nij", a, basis.second_partials),
    )


def synthesize_gradient(basis: EigenBasis, v: SpectralVector) -> np.ndarray:
    _check(basis, v)
    return np.einsum("k,kni->ni", v.coeffs, basis.gradients)


def synthesize_hessian(basis: EigenBasis, v: SpectralVector) -> np.ndarray:
    _check(basis, v)
    return np.einsum("k,knab->nab", v.coeffs, basis.hessians)


def apply_lambda_s(basis: EigenBasis, v: SpectralVector, s: float) -> SpectralVector:
    _check(basis, v)
    return SpectralVector(basis.lam**s * v.coeffs, v.basis_id)


def sobolev_inner(basis: EigenBasis, v: SpectralVector, w: SpectralVector, s: float) -> float:
    _check(basis, v)
    _same_basis(v, w)
    return float(np.sum(basis.lam ** (2.0 * s) * v.coeffs * w.coeffs))


def sobolev_norm(basis: EigenBasis, v: SpectralVector, s: float) -> float:
    return float(np.sqrt(sobolev_inner(basis, v, v, s)))


def hminus1_norm_of_functional(basis: EigenBasis, pairings) -> float:
    """H^-1 norm of the functional F restricted to the span, from <F, e_k>."""
    pairings = np.asarray(pairings, dtype=float)
    if pairings.shape[-1] != basis.n:
        raise ShapeMismatch(f"expected {basis.n} pairings, got {pairings.shape[-1]}")
    return float(np.sqrt(np.sum(pairings**2 / basis.lam**2)))


def tail_norm(basis: EigenBasis, v: SpectralVector, n_cut: int, s: float = 0.0) -> float:
    """||u - P_ncut u||_s, the part of u beyond the first n_cut modes."""
    _check(basis, v)
    tail = v.coeffs[n_cut:]
    return float(np.sqrt(np.sum(basis.lam[n_cut:] ** (2.0 * s) * tail**2)))


def tail_bound(basis: EigenBasis, v: SpectralVector, n_cut: int, s: float = 0.0) -> float:
    """Upper bound lam_(ncut)^-1 ||u||_(s+1) on the truncation error of keeping n_cut modes."""
    _check(basis, v)
    if n_cut >= basis.n:
        return 0.0
    return float(sobolev_norm(basis, v, s + 1.0) / basis.lam[n_cut])
