"""
Chart divergence operators on sampled fields.

    Div X      = d_k X^k + Gamma^j_kj X^k
    Div w      = g^ij d_i w_j - Gamma^k_il g^il w_k
    (Div T)_i  = d_j T^j_i + Gamma^j_jl T^l_i - Gamma^l_ji T^j_l
    DivDiv T   = Div (Div T)
"""

import numpy as np

from core.errors import MissingPartials
from fields.tensors import OneForm, ScalarField, TensorField, VectorField
from geometry.manifolds import QuadratureGrid, mixed_hessian, raise_index


def _contracted_christoffel(grid: QuadratureGrid) -> np.ndarray:
    """Gamma^j_kj indexed by k."""
    return np.einsum("njkj->nk", grid.christoffel)


def div_vector(grid: QuadratureGrid, X: VectorField) -> np.ndarray:
    if X.d1 is None:
        raise MissingPartials("vector field carries no first partials")
    return np.einsum("nkk->n", X.d1) + np.einsum("nk,nk->n", _contracted_christoffel(grid), X.comps)


def div_oneform(grid: QuadratureGrid, omega: OneForm) -> np.ndarray:
    if omega.d1 is None:
        raise MissingPartials("one-form carries no first partials")
    g_inv = grid.inverse_metric
    return np.einsum("nij,nij->n", g_inv, omega.d1) - np.einsum(
        "nkil,nil,nk->n", grid.christoffel, g_inv, omega.comps
    )


def div_tensor(grid: QuadratureGrid, T: TensorField) -> OneForm:
    """Divergence of a (1,1) tensor; first partials of the result are filled when T has second partials."""
    if T.d1 is None:
        raise MissingPartials("tensor field carries no first partials")
    gamma = grid.christoffel
    trace_gamma = np.einsum("njjl->nl", gamma)
    comps = (
        np.einsum("njji->ni", T.d1)
        + np.einsum("nl,nli->ni", trace_gamma, T.comps)
        - np.einsum("nlji,njl->ni", gamma, T.comps)
    )
    d1 = None
    if T.d2 is not None:
        gamma_d1 = grid.christoffel_d1
        d1 = (
            np.einsum("nkjji->nki", T.d2)
            + np.einsum("nkjjl,nli->nki", gamma_d1, T.comps)
            + np.einsum("nl,nkli->nki", trace_gamma, T.d1)
            - np.einsum("nklji,njl->nki", gamma_d1, T.comps)
            - np.einsum("nlji,nkjl->nki", gamma, T.d1)
        )
    return OneForm(comps, d1)


def div_div(grid: QuadratureGrid, T: TensorField) -> np.ndarray:
    if T.d2 is None:
        raise MissingPartials("double divergence needs second partials of the tensor")
    return div_oneform(grid, div_tensor(grid, T))


def gradient(grid: QuadratureGrid, f: ScalarField) -> np.ndarray:
    if f.d1 is None:
        raise MissingPartials("scalar field carries no first partials")
    return raise_index(grid, f.d1)


def hessian(grid: QuadratureGrid, f: ScalarField) -> np.ndarray:
    """(1,1) components nabla^a nabla_b f."""
    if f.d1 is None or f.d2 is None:
        raise MissingPartials("scalar field needs first and second partials for a Hessian")
    return mixed_hessian(grid, f.d1, f.d2)


def laplacian(grid: QuadratureGrid, f: ScalarField) -> np.ndarray:
    return np.einsum("naa->n", hessian(grid, f))


def pair_oneform_vector(omega: np.ndarray, X: np.ndarray) -> np.ndarray:
    return np.einsum("...ni,...ni->...n", omega, X)
