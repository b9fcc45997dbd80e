"""
Right-hand side assembly for the Galerkin systems.

With u = sum_k alpha_k e_k, the deterministic system tested against e_j reads

    alpha'_j = int <f_x(u), grad e_j> dV + int tr(A_x(u) o H^{e_j}) dV - eps mu_j alpha_j

where the diffusion pairing uses the trace identity, so only values of A along
u and the tabulated basis Hessians are needed. Coefficient arrays may carry a
leading batch axis, shape (B, n), for ensembles.
"""

from typing import Optional, Tuple

import numpy as np
import structlog

from core.errors import NotLinearDiffusion, ShapeMismatch
from fields.models import CoefficientModel
from fields.operators import div_div, div_tensor, div_vector
from fields.tensors import ScalarField
from geometry.basis import EigenBasis
from geometry.manifolds import norm_sq_oneform, norm_sq_vector

log = structlog.get_logger(__name__)


class AssemblyWorkspace:
    """Weighted basis tables for one (basis, model, eps) triple; read-only after construction."""

    def __init__(self, basis: EigenBasis, model: CoefficientModel, eps: float = 0.0):
        if model.grid is not basis.grid:
            raise ShapeMismatch("model and basis must be tabulated on the same grid")
        if eps < 0 or not np.isfinite(eps):
            raise ValueError(f"regularization eps must be finite and >= 0, got {eps}")
        self.basis = basis
        self.grid = basis.grid
        self.model = model
        self.eps = float(eps)
        self.n = basis.n

        w = self.grid.weights
        N, d = self.grid.n_nodes, self.grid.dimension
        # flux: sum_{n,a} w f^a d_a e_j
        self._flux_table = (basis.partials * w[None, :, None]).reshape(self.n, N * d).T.copy()
        # diffusion: sum_{n,a,b} w A^a_b H_j^b_a
        hess_t = np.swapaxes(basis.hessians, -1, -2) * w[None, :, None, None]
        self._hess_table = hess_t.reshape(self.n, N * d * d).T.copy()
        self._value_table = (basis.values * w).T.copy()
        self._linear_operator: Optional[np.ndarray] = None

    @property
    def mu(self) -> np.ndarray:
        return self.basis.mu

    def check_alpha(self, alpha) -> np.ndarray:
        alpha = np.asarray(alpha, dtype=float)
        if alpha.ndim not in (1, 2) or alpha.shape[-1] != self.n:
            raise ShapeMismatch(f"expected coefficients of shape (n,) or (B, n) with n={self.n}, got {alpha.shape}")
        return alpha

    def values(self, alpha) -> np.ndarray:
        return np.asarray(alpha) @ self.basis.values

    def flux_pairing(self, u: np.ndarray) -> np.ndarray:
        if not self.model.flux_terms:
            return np.zeros(u.shape[:-1] + (self.n,))
        F = self.model.flux(u)
        return F.reshape(F.shape[:-2] + (-1,)) @ self._flux_table

    def diffusion_pairing(self, u: np.ndarray) -> np.ndarray:
        if not self.model.diffusion_terms:
            return np.zeros(u.shape[:-1] + (self.n,))
        A = self.model.diffusion(u)
        return A.reshape(A.shape[:-3] + (-1,)) @ self._hess_table

    def pairings(self, alpha) -> Tuple[np.ndarray, np.ndarray]:
        """(flux pairing, diffusion pairing) vectors."""
        u = self.values(self.check_alpha(alpha))
        return self.flux_pairing(u), self.diffusion_pairing(u)

    def regularization(self, alpha) -> np.ndarray:
        return -self.eps * self.mu * alpha

    def rhs(self, alpha) -> np.ndarray:
        flux, diff = self.pairings(alpha)
        return flux + diff + self.regularization(alpha)

    def drift(self, alpha) -> np.ndarray:
        """Flux plus diffusion pairings; the stochastic system carries no eps term."""
        flux, diff = self.pairings(alpha)
        return flux + diff

    def noise_pairing(self, alpha) -> np.ndarray:
        u = self.values(self.check_alpha(alpha))
        return self.model.noise(u) @ self._value_table

    def linear_operator(self) -> np.ndarray:
        """L_jk = int tr(A_x(e_k) o H^{e_j}) dV - eps mu_j delta_jk, for linear diffusion."""
        if not self.model.is_linear_diffusion:
            raise NotLinearDiffusion(f"model {self.model.name!r} has lam-nonlinear diffusion")
        if self._linear_operator is None:
            D = self.diffusion_pairing(self.basis.values)
            L = D.T - np.diag(self.eps * self.mu)
            L.setflags(write=False)
            self._linear_operator = L
            log.debug("assembly.linear_operator", n=self.n, model=self.model.name)
        return self._linear_operator

    # strong route through the chart divergence operators

    def solution_field(self, alpha) -> ScalarField:
        alpha = self.check_alpha(alpha)
        if alpha.ndim != 1:
            raise ShapeMismatch("strong-form evaluation takes a single coefficient vector")
        return ScalarField.from_basis(self.basis, alpha)

    def strong_pairings(self, alpha) -> Tuple[np.ndarray, np.ndarray]:
        """(<-Div f(u), e_j>, <DivDiv A(u), e_j>) by quadrature of the strong form."""
        u = self.solution_field(alpha)
        div_f = div_vector(self.grid, self.model.flux_along(u))
        divdiv_a = div_div(self.grid, self.model.tensor_along(u))
        return -div_f @ self._value_table, divdiv_a @ self._value_table

    def flux_norm_sq(self, alpha) -> float:
        u = self.values(self.check_alpha(alpha))
        return float(norm_sq_vector(self.grid, self.model.flux(u)) @ self.grid.weights)

    def div_diffusion_norm_sq(self, alpha) -> float:
        """||Div A(u)||^2_L2 for the composed tensor A_x(u(x))."""
        u = self.solution_field(alpha)
        div_a = div_tensor(self.grid, self.model.tensor_along(u)).comps
        return float(norm_sq_oneform(self.grid, div_a) @ self.grid.weights)


def _alpha_of(state) -> np.ndarray:
    return getattr(state, "alpha", state)


def rhs_deterministic(ws: AssemblyWorkspace, state) -> np.ndarray:
    return ws.rhs(ws.check_alpha(_alpha_of(state)))


def rhs_noise(ws: AssemblyWorkspace, state) -> np.ndarray:
    """b_j = int Phi(x, u) e_j dV."""
    return ws.noise_pairing(_alpha_of(state))


def linear_operator(ws: AssemblyWorkspace) -> np.ndarray:
    return ws.linear_operator()


def strong_pairings(ws: AssemblyWorkspace, state) -> Tuple[np.ndarray, np.ndarray]:
    return ws.strong_pairings(_alpha_of(state))
