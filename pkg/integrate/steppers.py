"""
One-step maps for the Galerkin ODE system alpha' = F(alpha).

RK4 treats the whole right-hand side explicitly. The IMEX stepper splits
F = L alpha + N(alpha) with L the state-independent diffusion operator of a
lam-linear model, Crank-Nicolson on L and Adams-Bashforth 2 on the flux N.
"""

import warnings
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.linalg import LinAlgError, LinAlgWarning, lu_factor, lu_solve

from core.errors import Blowup, SingularSystem
from galerkin.assembly import AssemblyWorkspace, rhs_deterministic


@dataclass(frozen=True, eq=False)
class GalerkinState:
    t: float
    alpha: np.ndarray

    def __post_init__(self):
        alpha = np.asarray(self.alpha, dtype=float)
        if not np.all(np.isfinite(alpha)):
            raise Blowup(float(self.t))
        object.__setattr__(self, "alpha", alpha)

    def advanced(self, dt: float, alpha: np.ndarray) -> "GalerkinState":
        return GalerkinState(self.t + dt, alpha)


def step_rk4(ws: AssemblyWorkspace, state: GalerkinState, dt: float, k1: Optional[np.ndarray] = None) -> GalerkinState:
    """Classical four-stage step; k1 may be passed in when the caller already evaluated F(alpha)."""
    a = state.alpha
    if k1 is None:
        k1 = rhs_deterministic(ws, a)
    k2 = rhs_deterministic(ws, a + 0.5 * dt * k1)
    k3 = rhs_deterministic(ws, a + 0.5 * dt * k2)
    k4 = rhs_deterministic(ws, a + dt * k3)
    return state.advanced(dt, a + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4))


class ImexCnab2:
    """
    CNAB2 for a fixed dt:

        (I - dt/2 L) a_{k+1} = (I + dt/2 L) a_k + dt (3/2 N_k - 1/2 N_{k-1})

    The first step has no flux history and uses N_0 alone (forward Euler on
    the flux, Crank-Nicolson on L). L is factorized once.
    """

    def __init__(self, ws: AssemblyWorkspace, dt: float):
        if not dt > 0:
            raise ValueError(f"dt must be positive, got {dt}")
        self.ws = ws
        self.dt = float(dt)
        L = ws.linear_operator()
        identity = np.eye(ws.n)
        lhs = identity - 0.5 * self.dt * L
        try:
            with warnings.catch_warnings():
                warnings.simplefilter("error", LinAlgWarning)
                self._lu = lu_factor(lhs)
        except (LinAlgError, LinAlgWarning, ValueError) as exc:
            raise SingularSystem(f"I - dt/2 L could not be factorized for dt={dt}: {exc}") from exc
        pivots = np.abs(np.diag(self._lu[0]))
        if not np.all(np.isfinite(pivots)) or pivots.min() == 0.0:
            raise SingularSystem(f"I - dt/2 L is singular for dt={dt}")
        self._explicit_matrix = identity + 0.5 * self.dt * L
        self._previous_flux: Optional[np.ndarray] = None

    def reset(self) -> None:
        self._previous_flux = None

    def step(self, state: GalerkinState, flux: Optional[np.ndarray] = None) -> GalerkinState:
        """Advance by dt; `flux` is the flux pairing at state.alpha if already known."""
        if flux is None:
            flux = self.ws.flux_pairing(self.ws.values(self.ws.check_alpha(state.alpha)))
        if self._previous_flux is None:
            extrapolated = flux
        else:
            extrapolated = 1.5 * flux - 0.5 * self._previous_flux
        rhs = self._explicit_matrix @ state.alpha + self.dt * extrapolated
        self._previous_flux = flux
        return state.advanced(self.dt, lu_solve(self._lu, rhs))


def step_imex(ws: AssemblyWorkspace, state: GalerkinState, dt: float) -> GalerkinState:
    """A single CNAB2 step from a state without flux history."""
    return ImexCnab2(ws, dt).step(state)
