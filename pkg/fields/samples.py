"""
Random smooth fields for the identity suite.

Vector and tensor fields are random scalar combinations of a frame of
globally smooth fields: coordinate frames on the flat tori, restrictions of
ambient fields on the sphere. The tensor frames are closed under the metric
transpose, so every random tensor comes with its transpose in closed form.
"""

from typing import List, Tuple

import numpy as np

from fields.tensors import ScalarField, TensorField, VectorField
from geometry.basis import EigenBasis
from geometry.manifolds import ManifoldKind

SPHERE_TENSOR_FRAMES = ("identity", "killing", "polar", "twist", "twist_t")
SPHERE_TRANSPOSE = {"identity": "identity", "killing": "killing", "polar": "polar", "twist": "twist_t", "twist_t": "twist"}


def random_scalar(basis: EigenBasis, rng: np.random.Generator) -> ScalarField:
    coeffs = rng.standard_normal(basis.n) / (1.0 + basis.mu)
    return ScalarField.from_basis(basis, coeffs)


def _vector_frame(basis: EigenBasis) -> List[VectorField]:
    grid = basis.grid
    if grid.spec.kind is ManifoldKind.SPHERE2:
        return [VectorField.constant(grid, [0.0, 1.0]), VectorField.polar_gradient(grid)]
    return [VectorField.constant(grid, row) for row in np.eye(grid.dimension)]


def _tensor_frame(basis: EigenBasis) -> List[Tuple[TensorField, TensorField]]:
    """(F, F transposed) pairs."""
    grid = basis.grid
    if grid.spec.kind is ManifoldKind.SPHERE2:
        frames = {}
        for name in SPHERE_TENSOR_FRAMES:
            frames[name] = TensorField.identity(grid) if name == "identity" else TensorField.sphere_frame(grid, name)
        return [(frames[name], frames[SPHERE_TRANSPOSE[name]]) for name in SPHERE_TENSOR_FRAMES]
    d = grid.dimension
    return [(TensorField.unit(grid, a, b), TensorField.unit(grid, b, a)) for a in range(d) for b in range(d)]


def random_vector(basis: EigenBasis, rng: np.random.Generator) -> VectorField:
    frame = _vector_frame(basis)
    out = frame[0].scaled(random_scalar(basis, rng))
    for X in frame[1:]:
        out = out + X.scaled(random_scalar(basis, rng))
    return out


def random_tensor_pair(basis: EigenBasis, rng: np.random.Generator) -> Tuple[TensorField, TensorField]:
    """A random smooth (1,1) tensor and its metric transpose."""
    A = A_t = None
    for F, F_t in _tensor_frame(basis):
        s = random_scalar(basis, rng)
        term, term_t = F.scaled(s), F_t.scaled(s)
        A = term if A is None else A + term
        A_t = term_t if A_t is None else A_t + term_t
    return A, A_t
