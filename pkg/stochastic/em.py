"""
Euler-Maruyama for the stochastic Galerkin system

    d alpha_j = (int <f(u), grad e_j> + int tr(A(u) o H^{e_j})) dt + (int Phi(u) e_j) dW

driven by a single scalar Wiener process. Paths are integrated in batches of
shape (B, n); each row owns the Philox stream of its sample index.
"""

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence, Tuple

import numpy as np

from core.errors import Blowup, ConfigError, MissingNoise, NotLinearDiffusion
from galerkin.assembly import AssemblyWorkspace
from integrate.steppers import GalerkinState
from spectral.ops import SpectralVector
from stochastic.rng import WienerPath, standard_normals


@dataclass(frozen=True)
class PathConfig:
    T: float
    dt: float
    seed: int = 0
    output_stride: int = 1

    def __post_init__(self):
        if not (math.isfinite(self.dt) and self.dt > 0):
            raise ConfigError(f"dt must be finite and positive, got {self.dt}")
        if not (math.isfinite(self.T) and self.T > 0):
            raise ConfigError(f"T must be finite and positive, got {self.T}")
        if self.output_stride < 1:
            raise ConfigError(f"output_stride must be >= 1, got {self.output_stride}")

    @property
    def n_steps(self) -> int:
        steps = int(round(self.T / self.dt))
        if steps < 1 or abs(steps * self.dt - self.T) > 1e-9 * self.T:
            raise ConfigError(f"T={self.T} is not a whole number of steps dt={self.dt}")
        return steps

    def output_steps(self) -> np.ndarray:
        n = self.n_steps
        steps = list(range(0, n + 1, self.output_stride))
        if steps[-1] != n:
            steps.append(n)
        return np.array(steps)


def require_stochastic(ws: AssemblyWorkspace) -> None:
    if not ws.model.is_linear_diffusion:
        raise NotLinearDiffusion(f"stochastic runs need lam-linear diffusion; {ws.model.name!r} is nonlinear")
    if not ws.model.has_noise:
        raise MissingNoise(f"model {ws.model.name!r} has no noise coefficient")


def em_increment(ws: AssemblyWorkspace, alpha: np.ndarray, dt: float, dW) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(alpha + dt drift + dW b, drift, b) for coefficients of shape (n,) or (B, n); dW scalar or (B,)."""
    drift = ws.drift(alpha)
    b = ws.noise_pairing(alpha)
    dW = np.asarray(dW, dtype=float)
    step = dW[..., None] * b if dW.ndim else dW * b
    return alpha + dt * drift + step, drift, b


def em_step(ws: AssemblyWorkspace, state: GalerkinState, dt: float, dW: float) -> GalerkinState:
    require_stochastic(ws)
    alpha, _, _ = em_increment(ws, ws.check_alpha(state.alpha), dt, float(dW))
    return state.advanced(dt, alpha)


@dataclass
class BatchResult:
    """Per-path quantities of one batch; row b belongs to sample_indices[b]."""

    sample_indices: Tuple[int, ...]
    dt: float
    times: np.ndarray
    alphas: np.ndarray  # (B, n_out, n)
    grad_integral: np.ndarray  # (B, n_out), int_0^t ||grad u||^2
    h2_integral: np.ndarray  # (B, n_out), int_0^t ||u||_H2^2
    ito_integral: np.ndarray  # (B,), sum (alpha . b) dW
    ito_residual: np.ndarray  # (B,)
    lags: Tuple[int, ...] = ()
    holder: np.ndarray = field(default_factory=lambda: np.zeros((0, 0)))  # (B, n_lags)


def _pairwise_dot(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    return np.einsum("bk,bk->b", x, y)


def integrate_batch(
    ws: AssemblyWorkspace,
    u0: SpectralVector,
    config: PathConfig,
    sample_indices: Sequence[int],
    increments: Optional[np.ndarray] = None,
    lags: Sequence[int] = (),
) -> BatchResult:
    """
    EM for B paths at once. `increments` (B, n_steps) overrides the Philox streams.

    The Ito residual is

        1/2 |a_T|^2 - 1/2 |a_0|^2 - sum (a.drift dt + a.b dW + 1/2 |drift|^2 dt^2 + drift.b dt dW + 1/2 |b|^2 dt)

    which equals sum 1/2 |b|^2 (dW^2 - dt) for EM, a mean-zero quantity.
    """
    require_stochastic(ws)
    if u0.n != ws.n:
        raise ConfigError(f"initial state has {u0.n} coefficients, basis has {ws.n}")
    n_steps, dt = config.n_steps, config.dt
    indices = tuple(int(i) for i in sample_indices)
    B = len(indices)
    if increments is None:
        increments = math.sqrt(dt) * standard_normals(config.seed, indices, n_steps)
    elif increments.shape != (B, n_steps):
        raise ConfigError(f"expected increments of shape {(B, n_steps)}, got {increments.shape}")

    out_steps = config.output_steps()
    out_slot = {int(k): i for i, k in enumerate(out_steps)}
    lags = tuple(int(l) for l in lags if 1 <= int(l) <= n_steps)
    ring_size = max(lags, default=0) + 1

    mu, h2_weight = ws.mu, ws.basis.lam**4
    alpha = np.tile(u0.coeffs, (B, 1))
    alphas = np.empty((B, len(out_steps), ws.n))
    grad_integral = np.zeros((B, len(out_steps)))
    h2_integral = np.zeros((B, len(out_steps)))
    alphas[:, 0] = alpha

    half0 = 0.5 * _pairwise_dot(alpha, alpha)
    ito = np.zeros(B)
    predicted = np.zeros(B)
    grad_now = (alpha**2) @ mu
    h2_now = (alpha**2) @ h2_weight
    grad_acc = np.zeros(B)
    h2_acc = np.zeros(B)
    ring = np.empty((ring_size, B, ws.n))
    ring[0] = alpha
    holder = np.zeros((B, len(lags)))

    for k in range(1, n_steps + 1):
        dW = increments[:, k - 1]
        new, drift, b = em_increment(ws, alpha, dt, dW)
        a_dot_b = _pairwise_dot(alpha, b)
        ito += a_dot_b * dW
        predicted += (
            _pairwise_dot(alpha, drift) * dt
            + a_dot_b * dW
            + 0.5 * _pairwise_dot(drift, drift) * dt * dt
            + _pairwise_dot(drift, b) * dt * dW
            + 0.5 * _pairwise_dot(b, b) * dt
        )
        bad = ~np.all(np.isfinite(new), axis=1)
        if bad.any():
            raise Blowup(k * dt, sample_index=indices[int(np.argmax(bad))])
        alpha = new

        grad_next = (alpha**2) @ mu
        h2_next = (alpha**2) @ h2_weight
        grad_acc += 0.5 * dt * (grad_now + grad_next)
        h2_acc += 0.5 * dt * (h2_now + h2_next)
        grad_now, h2_now = grad_next, h2_next

        if lags:
            ring[k % ring_size] = alpha
            for j, lag in enumerate(lags):
                if k >= lag:
                    delta = alpha - ring[(k - lag) % ring_size]
                    holder[:, j] += _pairwise_dot(delta, delta)

        slot = out_slot.get(k)
        if slot is not None:
            alphas[:, slot] = alpha
            grad_integral[:, slot] = grad_acc
            h2_integral[:, slot] = h2_acc

    ito_residual = 0.5 * _pairwise_dot(alpha, alpha) - half0 - predicted
    if lags:
        # mean over the admissible start times, per unit lag
        counts = np.array([(n_steps - lag + 1) * lag * dt for lag in lags])
        holder = holder / counts
    return BatchResult(
        sample_indices=indices,
        dt=dt,
        times=out_steps * dt,
        alphas=alphas,
        grad_integral=grad_integral,
        h2_integral=h2_integral,
        ito_integral=ito,
        ito_residual=ito_residual,
        lags=lags,
        holder=holder,
    )


@dataclass
class PathTrajectory:
    sample_index: int
    times: np.ndarray
    alphas: np.ndarray
    grad_integral: np.ndarray
    ito_integral: float
    ito_residual: float
    path: Optional[WienerPath] = None

    def monitor_rows(self, ws: AssemblyWorkspace):
        """(t, L2, H1, int ||grad u||^2) per output time."""
        l2 = np.sqrt(np.sum(self.alphas**2, axis=1))
        h1 = np.sqrt(self.alphas**2 @ ws.basis.lam**2)
        return list(zip(self.times, l2, h1, self.grad_integral))


def simulate_path(
    ws: AssemblyWorkspace,
    u0: SpectralVector,
    config: PathConfig,
    sample_index: int = 0,
    path: Optional[WienerPath] = None,
) -> PathTrajectory:
    """One path; the increments come from `path` if given, else from the stream of (seed, sample_index)."""
    if path is None:
        path = WienerPath.generate(config.seed, sample_index, config.dt, config.n_steps)
    elif path.n_steps != config.n_steps or not math.isclose(path.dt, config.dt, rel_tol=1e-12):
        raise ConfigError(f"Wiener path has {path.n_steps} steps of {path.dt}, config needs {config.n_steps} of {config.dt}")
    result = integrate_batch(ws, u0, config, [sample_index], increments=path.increments[None, :])
    return PathTrajectory(
        sample_index=int(sample_index),
        times=result.times,
        alphas=result.alphas[0],
        grad_integral=result.grad_integral[0],
        ito_integral=float(result.ito_integral[0]),
        ito_residual=float(result.ito_residual[0]),
        path=path,
    )