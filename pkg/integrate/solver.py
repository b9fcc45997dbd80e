"""
Deterministic trajectory driver.

Every step feeds the energy ledger, so the ledger residual is checked against
the run tolerance at the step resolution; output rows (monitors and snapshots)
are only taken every `output_stride` steps and at the final time.
"""

import math
import time
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, List, Optional

import numpy as np
import structlog

from core.errors import ConfigError, EnergyViolation
from fields.checks import CheckReport, diffusivity_spectrum
from galerkin.assembly import AssemblyWorkspace
from galerkin.monitors import EnergyLedger, energy_bound_holds, hminus1_bound_holds, linear_ramp, weak_residual
from integrate.steppers import GalerkinState, ImexCnab2, step_rk4
from spectral.ops import SpectralVector

log = structlog.get_logger(__name__)

RK4_STABILITY_LIMIT = 1.8
RK4_SAFETY = 0.5

MONITOR_COLUMNS = ("t", "L2", "H1", "Hm1_dt", "energy_residual", "min_u", "max_u")


class Scheme(str, Enum):
    AUTO = "auto"
    RK4 = "rk4"
    IMEX = "imex"


@dataclass(frozen=True)
class SolverConfig:
    dt: float
    T: float
    scheme: Scheme = Scheme.AUTO
    output_stride: int = 1
    energy_tolerance: float = 1e-4
    monitor_norms: bool = True

    def __post_init__(self):
        if not (math.isfinite(self.dt) and self.dt > 0):
            raise ConfigError(f"dt must be finite and positive, got {self.dt}")
        if not (math.isfinite(self.T) and self.T > 0):
            raise ConfigError(f"T must be finite and positive, got {self.T}")
        if self.output_stride < 1:
            raise ConfigError(f"output_stride must be >= 1, got {self.output_stride}")
        object.__setattr__(self, "scheme", Scheme(self.scheme))

    @property
    def n_steps(self) -> int:
        steps = int(round(self.T / self.dt))
        if steps < 1 or abs(steps * self.dt - self.T) > 1e-9 * self.T:
            raise ConfigError(f"T={self.T} is not a whole number of steps dt={self.dt}")
        return steps


@dataclass
class MonitorRow:
    t: float
    L2: float
    H1: float
    Hm1_dt: float
    energy_residual: float
    min_u: float
    max_u: float

    def as_tuple(self):
        return tuple(getattr(self, c) for c in MONITOR_COLUMNS)


@dataclass
class SolverRun:
    config: SolverConfig
    scheme: Scheme
    substeps: int
    times: np.ndarray
    alphas: np.ndarray
    monitors: List[MonitorRow]
    ledger: EnergyLedger
    checks: Dict[str, CheckReport] = field(default_factory=dict)
    wall_time: float = 0.0

    @property
    def final(self) -> GalerkinState:
        return GalerkinState(float(self.times[-1]), self.alphas[-1])

    def monitor_table(self) -> List[tuple]:
        return [row.as_tuple() for row in self.monitors]

    def weak_residual(self, psi, theta=None) -> float:
        """Weak-form residual of the stored trajectory against theta(t) psi(x); theta defaults to 1 - t/T."""
        theta = theta or linear_ramp(float(self.times[-1]))
        return weak_residual(self.ledger.ws, self.times, self.alphas, psi, theta)


def resolve_scheme(ws: AssemblyWorkspace, scheme: Scheme) -> Scheme:
    if scheme is Scheme.AUTO:
        return Scheme.IMEX if ws.model.is_linear_diffusion else Scheme.RK4
    return scheme


def rk4_substeps(ws: AssemblyWorkspace, dt: float) -> int:
    """Equal substeps keeping each RK4 step under 0.5 * 1.8 / (mu_max (kappa_max + eps))."""
    kappa_max = float(diffusivity_spectrum(ws.model)[0].max()) if ws.model.diffusion_terms else 0.0
    stiffness = float(ws.mu.max()) * (max(kappa_max, 0.0) + ws.eps)
    if stiffness <= 0.0:
        return 1
    dt_max = RK4_SAFETY * RK4_STABILITY_LIMIT / stiffness
    return max(1, int(math.ceil(dt / dt_max - 1e-12)))


def _monitor_row(ws: AssemblyWorkspace, t: float, alpha: np.ndarray, ledger: EnergyLedger) -> MonitorRow:
    ledger_row = ledger.rows[-1]
    u = ws.values(alpha)
    return MonitorRow(
        t=t,
        L2=math.sqrt(2.0 * ledger_row.half_l2_sq),
        H1=math.sqrt(ledger_row.h1_sq),
        Hm1_dt=ledger_row.hm1_dt,
        energy_residual=ledger_row.residual,
        min_u=float(u.min()),
        max_u=float(u.max()),
    )


def solve(ws: AssemblyWorkspace, u0: SpectralVector, config: SolverConfig) -> SolverRun:
    """Integrate from u0 to config.T; raises Blowup or EnergyViolation with the time of failure."""
    if u0.n != ws.n:
        raise ConfigError(f"initial state has {u0.n} coefficients, basis has {ws.n}")
    started = time.perf_counter()
    scheme = resolve_scheme(ws, config.scheme)
    n_steps = config.n_steps
    dt = config.dt
    substeps = rk4_substeps(ws, dt) if scheme is Scheme.RK4 else 1
    h = dt / substeps
    imex = ImexCnab2(ws, dt) if scheme is Scheme.IMEX else None

    state = GalerkinState(0.0, u0.coeffs.copy())
    tolerance = config.energy_tolerance * (1.0 + float(u0.coeffs @ u0.coeffs))
    ledger = EnergyLedger(ws)
    flux, diff = ws.pairings(state.alpha)
    ledger.record(0.0, state.alpha, flux, diff, keep=True, with_norms=config.monitor_norms)

    times = [0.0]
    alphas = [state.alpha.copy()]
    monitors = [_monitor_row(ws, 0.0, state.alpha, ledger)]
    log.info("solve.started", scheme=scheme.value, steps=n_steps, substeps=substeps, n=ws.n, model=ws.model.name)

    for step in range(1, n_steps + 1):
        if imex is not None:
            state = imex.step(state, flux)
        else:
            for sub in range(substeps):
                if sub > 0:
                    flux, diff = ws.pairings(state.alpha)
                    ledger.record(state.t, state.alpha, flux, diff, keep=False)
                k1 = flux + diff + ws.regularization(state.alpha)
                state = step_rk4(ws, state, h, k1=k1)
        # exact grid time, free of accumulated rounding
        state = GalerkinState(step * dt, state.alpha)

        keep = step % config.output_stride == 0 or step == n_steps
        flux, diff = ws.pairings(state.alpha)
        residual = ledger.record(state.t, state.alpha, flux, diff, keep=keep, with_norms=keep and config.monitor_norms)
        if residual > tolerance:
            log.error("solve.energy_violation", t=state.t, residual=residual, tolerance=tolerance)
            raise EnergyViolation(state.t, residual, tolerance)
        if keep:
            times.append(state.t)
            alphas.append(state.alpha.copy())
            monitors.append(_monitor_row(ws, state.t, state.alpha, ledger))

    run = SolverRun(
        config=config,
        scheme=scheme,
        substeps=substeps,
        times=np.array(times),
        alphas=np.array(alphas),
        monitors=monitors,
        ledger=ledger,
    )
    if config.monitor_norms:
        run.checks["energy_bound"] = energy_bound_holds(ledger, ws.model.parabolicity_c + ws.eps, ws.model.growth_C)
        run.checks["hminus1_bound"] = hminus1_bound_holds(ledger)
    run.wall_time = time.perf_counter() - started
    log.info(
        "solve.finished",
        steps=n_steps,
        max_residual=ledger.max_residual,
        wall_time=round(run.wall_time, 3),
    )
    return run
