"""
Runtime monitors built on the assembled pairings: the energy ledger, the a
priori bounds, weak-form and entropy residuals, and the parabolicity estimates.
"""

import math
from dataclasses import asdict, dataclass, field
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np
from scipy.special import expit, log_expit

from core.errors import NotCompatible
from fields.checks import CheckReport, check_geometry_compat
from galerkin.assembly import AssemblyWorkspace
from geometry.manifolds import integrate
from spectral.ops import hminus1_norm_of_functional

H_MINUS1_CONSTANT = 3.0


@dataclass
class LedgerRow:
    t: float
    half_l2_sq: float
    diffusion_pairing: float  # int <Div A(u), grad u>
    flux_pairing: float  # int <f(u), grad u>
    regularization: float  # eps ||grad u||^2
    h1_sq: float
    grad_sq: float
    hm1_dt: float
    grad_integral: float
    residual: float
    flux_sq: Optional[float] = None
    div_a_sq: Optional[float] = None


class EnergyLedger:
    """
    Discrete form of d/dt (1/2)||u||^2 = int <f(u), grad u> - int <Div A(u), grad u> - eps ||grad u||^2.

    Terms are accumulated with the trapezoid rule over every recorded point; only
    points recorded with keep=True become rows. Rows recorded with with_norms=True
    also carry ||f(u)||^2 and ||Div A(u)||^2 for the H^-1 bound.
    """

    def __init__(self, ws: AssemblyWorkspace):
        self.ws = ws
        self.rows: List[LedgerRow] = []
        self.initial_half_l2_sq: Optional[float] = None
        self.max_residual = 0.0
        self._last: Optional[Tuple[float, np.ndarray]] = None
        self._integrals = np.zeros(4)  # diffusion, flux, regularization, grad

    def record(self, t: float, alpha, flux_vec=None, diff_vec=None, keep: bool = True, with_norms: bool = False) -> float:
        ws = self.ws
        alpha = np.asarray(alpha, dtype=float)
        if flux_vec is None or diff_vec is None:
            flux_vec, diff_vec = ws.pairings(alpha)
        grad_sq = float(np.dot(ws.mu * alpha, alpha))
        point = np.array([-float(alpha @ diff_vec), float(alpha @ flux_vec), ws.eps * grad_sq, grad_sq])
        half = 0.5 * float(alpha @ alpha)

        if self._last is None:
            self.initial_half_l2_sq = half
        else:
            t_prev, prev = self._last
            self._integrals += 0.5 * (t - t_prev) * (prev + point)
        self._last = (t, point)

        diff_int, flux_int, reg_int, grad_int = self._integrals
        residual = abs(half - self.initial_half_l2_sq + diff_int + reg_int - flux_int)
        self.max_residual = max(self.max_residual, residual)

        if keep:
            dalpha = flux_vec + diff_vec - ws.eps * ws.mu * alpha
            row = LedgerRow(
                t=float(t),
                half_l2_sq=half,
                diffusion_pairing=point[0],
                flux_pairing=point[1],
                regularization=point[2],
                h1_sq=float(np.dot(ws.basis.lam**2 * alpha, alpha)),
                grad_sq=grad_sq,
                hm1_dt=hminus1_norm_of_functional(ws.basis, dalpha),
                grad_integral=float(grad_int),
                residual=float(residual),
            )
            if with_norms:
                row.flux_sq = ws.flux_norm_sq(alpha)
                row.div_a_sq = ws.div_diffusion_norm_sq(alpha)
            self.rows.append(row)
        return residual

    def series(self, name: str) -> np.ndarray:
        return np.array([getattr(r, name) for r in self.rows], dtype=float)

    def to_records(self) -> List[dict]:
        return [asdict(r) for r in self.rows]


def energy_ledger(ws: AssemblyWorkspace, times: Sequence[float], alphas: Sequence, with_norms: bool = True) -> EnergyLedger:
    """Ledger of a stored trajectory, time integrals on the trajectory's own grid."""
    ledger = EnergyLedger(ws)
    for t, alpha in zip(times, alphas):
        ledger.record(t, alpha, with_norms=with_norms)
    return ledger


def energy_bound_holds(ledger: EnergyLedger, c: float, C: Optional[float]) -> CheckReport:
    """||u(t)||^2 + c int_0^t ||grad u||^2 <= (||u0||^2 + C t) e^(C t) on every row."""
    if C is None:
        return CheckReport("energy_bound", False, math.nan, None, {"reason": "model declares no growth constant"})
    u0_sq = 2.0 * ledger.initial_half_l2_sq
    t = ledger.series("t")
    lhs = 2.0 * ledger.series("half_l2_sq") + c * ledger.series("grad_integral")
    rhs = (u0_sq + C * t) * np.exp(C * t)
    margin = float(np.max(lhs - rhs)) if len(t) else 0.0
    return CheckReport("energy_bound", margin <= 1e-12 * (1.0 + u0_sq), margin, 0.0, {"c": c, "C": C})


def _trapezoid(t: np.ndarray, y: np.ndarray) -> float:
    if len(t) < 2:
        return 0.0
    return float(np.sum(0.5 * np.diff(t) * (y[1:] + y[:-1])))


def hminus1_bound_holds(ledger: EnergyLedger, C_tilde: float = H_MINUS1_CONSTANT) -> CheckReport:
    """int ||d_t u||^2_{H^-1} <= C~ int (||f(u)||^2 + ||Div A(u)||^2 + eps^2 ||grad u||^2) on rows with norms."""
    rows = [r for r in ledger.rows if r.flux_sq is not None]
    t = np.array([r.t for r in rows])
    lhs = _trapezoid(t, np.array([r.hm1_dt**2 for r in rows]))
    eps = ledger.ws.eps
    rhs = C_tilde * _trapezoid(t, np.array([r.flux_sq + r.div_a_sq + eps**2 * r.grad_sq for r in rows]))
    passed = bool(np.isfinite(lhs)) and lhs <= rhs * (1.0 + 1e-10) + 1e-14
    return CheckReport("hminus1_bound", passed, lhs, rhs, {"C_tilde": C_tilde, "rows": len(rows)})


# weak form


def linear_ramp(T: float) -> Callable[[float], Tuple[float, float]]:
    """theta(t) = 1 - t/T and its derivative; vanishes at T."""
    return lambda t: (1.0 - t / T, -1.0 / T)


def weak_residual(
    ws: AssemblyWorkspace,
    times: Sequence[float],
    alphas: Sequence,
    psi,
    theta: Callable[[float], Tuple[float, float]],
) -> float:
    """
    |int int (u d_t phi + <f(u), grad phi> + tr(A(u) o H^phi) + eps u Lap phi) dV dt + int u0 phi(0) dV|
    for phi = theta(t) psi(x), psi given by coefficients in the basis.
    """
    psi = np.asarray(psi, dtype=float)
    times = np.asarray(times, dtype=float)
    integrand = np.empty(len(times))
    for i, (t, alpha) in enumerate(zip(times, alphas)):
        alpha = np.asarray(alpha, dtype=float)
        th, dth = theta(t)
        flux_vec, diff_vec = ws.pairings(alpha)
        spatial = psi @ flux_vec + psi @ diff_vec - ws.eps * float(np.sum(ws.mu * psi * alpha))
        integrand[i] = dth * float(alpha @ psi) + th * spatial
    initial = theta(times[0])[0] * float(np.asarray(alphas[0]) @ psi)
    return abs(_trapezoid(times, integrand) + initial)


# entropy


@dataclass(frozen=True)
class Entropy:
    name: str
    S: Callable[[np.ndarray], np.ndarray]
    S2: Callable[[np.ndarray], np.ndarray]

    @classmethod
    def quadratic(cls) -> "Entropy":
        return cls("quadratic", lambda u: 0.5 * u**2, np.ones_like)

    @classmethod
    def linear(cls, slope: float = 1.0) -> "Entropy":
        return cls("linear", lambda u: slope * u, np.zeros_like)

    @classmethod
    def upper(cls, delta: float = 0.01) -> "Entropy":
        """Smoothed (u - 1)_+, convex with S(0) = 0."""
        shift = delta * -log_expit(1.0 / delta)
        return cls("upper", lambda u: -delta * log_expit(-(u - 1.0) / delta) - shift, lambda u: _softplus_curvature(u - 1.0, delta))

    @classmethod
    def lower(cls, delta: float = 0.01) -> "Entropy":
        """Smoothed (u)_- = max(-u, 0), convex with S(0) = 0."""
        shift = delta * math.log(2.0)
        return cls("lower", lambda u: -delta * log_expit(u / delta) - shift, lambda u: _softplus_curvature(-u, delta))


def _softplus_curvature(x, delta):
    s = expit(x / delta)
    return s * (1.0 - s) / delta


@dataclass
class EntropyReport:
    entropy: str
    times: np.ndarray
    integral_S: np.ndarray
    dissipation: np.ndarray
    D: np.ndarray
    min_u: np.ndarray
    max_u: np.ndarray
    tolerance: float
    details: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return bool(np.all(self.D <= self.tolerance))


def entropy_residual(
    ws: AssemblyWorkspace,
    times: Sequence[float],
    alphas: Sequence,
    entropy: Entropy,
    tol: float = 1e-6,
    compat: Optional[CheckReport] = None,
) -> EntropyReport:
    """
    D(t) = int S(u(t)) - int S(u0) + int_0^t int (S''(u) <A'(u) grad u, grad u> + eps S''(u) |grad u|^2).
    Requires geometry compatibility; divergence terms then integrate to zero.
    """
    compat = compat or check_geometry_compat(ws.model)
    if not compat.passed:
        raise NotCompatible(f"model {ws.model.name!r} fails geometry compatibility (residual {compat.value:.3e})")
    grid, basis = ws.grid, ws.basis
    times = np.asarray(times, dtype=float)
    alphas = np.asarray(alphas, dtype=float)

    u = alphas @ basis.values
    du = np.einsum("tk,kni->tni", alphas, basis.partials)
    grad = np.einsum("tk,kni->tni", alphas, basis.gradients)
    dA = ws.model.diffusion_dlam(u)
    curvature = entropy.S2(u)
    density = curvature * (np.einsum("tnab,tnb,tna->tn", dA, grad, du) + ws.eps * np.einsum("tni,tni->tn", grad, du))

    integral_S = integrate(grid, entropy.S(u))
    rate = integrate(grid, density)
    dissipation = np.concatenate([[0.0], np.cumsum(0.5 * np.diff(times) * (rate[1:] + rate[:-1]))])
    D = integral_S - integral_S[0] + dissipation
    return EntropyReport(
        entropy=entropy.name,
        times=times,
        integral_S=integral_S,
        dissipation=dissipation,
        D=D,
        min_u=u.min(axis=1),
        max_u=u.max(axis=1),
        tolerance=tol,
        details={"compat_residual": compat.value},
    )


# parabolicity estimates


def parabolicity_monitor(ws: AssemblyWorkspace, alpha) -> dict:
    """
    Smallest constants that make the parabolicity estimates hold at this state:

        int DivDiv A(u) u  <= -c ||grad u||^2 + C max(1, ||u||^2)
        int DivDiv A(u) u  <= -c ||grad u||^2 + C ||u||^2                       (linear A)
        int DivDiv A(u) Lap u >= k ||Lap u||^2 - K max(1, ||u||^2, ||grad u||^2)  (linear A)

    with c the model's parabolicity constant and k = c / (2 d^2).
    """
    alpha = ws.check_alpha(alpha)
    _, diff_vec = ws.pairings(alpha)
    c = ws.model.parabolicity_c
    d = ws.grid.dimension
    u_sq = float(alpha @ alpha)
    grad_sq = float(np.dot(ws.mu * alpha, alpha))
    lap_sq = float(np.dot(ws.mu**2 * alpha, alpha))
    paired_u = float(alpha @ diff_vec)
    out = {
        "c": c,
        "P1_C": max(0.0, (paired_u + c * grad_sq) / max(1.0, u_sq)),
        "linear": ws.model.is_linear_diffusion,
    }
    if ws.model.is_linear_diffusion:
        out["P1_linear_C"] = max(0.0, (paired_u + c * grad_sq) / u_sq) if u_sq > 0 else 0.0
        k = c / (2.0 * d * d)
        paired_lap = -float(np.dot(ws.mu * alpha, diff_vec))
        out["k"] = k
        out["P2_K"] = max(0.0, (k * lap_sq - paired_lap) / max(1.0, u_sq, grad_sq))
    return out
