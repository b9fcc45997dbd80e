"""
Monte Carlo ensembles with streaming statistics.

Samples are split into fixed batches that do not depend on the worker count;
each batch becomes an EnsembleStats and the batches are merged in index order,
so the result is bit-identical for any --threads value.
"""

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from functools import reduce
from typing import Dict, List, Sequence, Tuple

import numpy as np
import structlog

from core.errors import ConfigError
from fields.checks import CheckReport
from galerkin.assembly import AssemblyWorkspace
from spectral.ops import SpectralVector
from stochastic.em import BatchResult, PathConfig, integrate_batch, require_stochastic
from stochastic.rng import check_increment_moments

log = structlog.get_logger(__name__)

DEFAULT_BATCH_SIZE = 256
DEFAULT_LAGS = (1, 10, 100)

ENSEMBLE_COLUMNS = (
    "t",
    "L2_of_mean",
    "E_L2_sq",
    "stderr_L2_sq",
    "E_H1_sq",
    "stderr_H1_sq",
    "E_grad_integral",
    "stderr_grad_integral",
    "E_H2_integral",
    "stderr_H2_integral",
)
HOLDER_COLUMNS = ("lag", "lag_steps", "quotient", "stderr")


@dataclass
class RunningMoments:
    """Count, mean and sum of squared deviations of an array-valued sample stream."""

    count: int
    mean: np.ndarray
    m2: np.ndarray

    @classmethod
    def from_samples(cls, samples) -> "RunningMoments":
        samples = np.asarray(samples, dtype=float)
        if samples.shape[0] == 0:
            raise ValueError("cannot summarize an empty sample")
        mean = samples.mean(axis=0)
        return cls(samples.shape[0], mean, np.sum((samples - mean) ** 2, axis=0))

    def merge(self, other: "RunningMoments") -> "RunningMoments":
        """Pairwise update; merging summaries equals summarizing the concatenated streams."""
        n = self.count + other.count
        delta = other.mean - self.mean
        mean = self.mean + delta * (other.count / n)
        m2 = self.m2 + other.m2 + delta**2 * (self.count * other.count / n)
        return RunningMoments(n, mean, m2)

    @property
    def variance(self) -> np.ndarray:
        if self.count < 2:
            return np.zeros_like(self.m2)
        return self.m2 / (self.count - 1)

    @property
    def stderr(self) -> np.ndarray:
        return np.sqrt(self.variance / self.count)


@dataclass(frozen=True)
class EnsembleConfig:
    M: int
    T: float
    dt: float
    seed: int = 0
    output_stride: int = 1
    lags: Tuple[int, ...] = DEFAULT_LAGS
    batch_size: int = DEFAULT_BATCH_SIZE

    def __post_init__(self):
        if self.M < 1:
            raise ConfigError(f"ensemble size M must be >= 1, got {self.M}")
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}")

    @property
    def path_config(self) -> PathConfig:
        return PathConfig(T=self.T, dt=self.dt, seed=self.seed, output_stride=self.output_stride)

    def batches(self) -> List[range]:
        return [range(start, min(start + self.batch_size, self.M)) for start in range(0, self.M, self.batch_size)]


@dataclass
class EnsembleStats:
    dt: float
    times: np.ndarray
    lags: Tuple[int, ...]
    alpha: RunningMoments  # (n_out, n)
    alpha_sq: RunningMoments  # (n_out, n)
    l2_sq: RunningMoments  # (n_out,)
    h1_sq: RunningMoments
    grad_integral: RunningMoments
    h2_integral: RunningMoments
    ito_integral: RunningMoments  # scalar
    ito_residual: RunningMoments
    holder: RunningMoments  # (n_lags,)
    checks: Dict[str, CheckReport] = field(default_factory=dict)

    @property
    def M(self) -> int:
        return self.alpha.count

    @classmethod
    def from_batch(cls, result: BatchResult, lam: np.ndarray) -> "EnsembleStats":
        alphas = result.alphas
        sq = alphas**2
        return cls(
            dt=result.dt,
            times=result.times,
            lags=result.lags,
            alpha=RunningMoments.from_samples(alphas),
            alpha_sq=RunningMoments.from_samples(sq),
            l2_sq=RunningMoments.from_samples(sq.sum(axis=-1)),
            h1_sq=RunningMoments.from_samples(sq @ lam**2),
            grad_integral=RunningMoments.from_samples(result.grad_integral),
            h2_integral=RunningMoments.from_samples(result.h2_integral),
            ito_integral=RunningMoments.from_samples(result.ito_integral),
            ito_residual=RunningMoments.from_samples(result.ito_residual),
            holder=RunningMoments.from_samples(result.holder),
        )

    def merge(self, other: "EnsembleStats") -> "EnsembleStats":
        if self.lags != other.lags or not np.array_equal(self.times, other.times):
            raise ValueError("cannot merge ensembles with different output times or lags")
        names = ("alpha", "alpha_sq", "l2_sq", "h1_sq", "grad_integral", "h2_integral", "ito_integral", "ito_residual", "holder")
        merged = {name: getattr(self, name).merge(getattr(other, name)) for name in names}
        return replace(self, checks=dict(self.checks), **merged)

    def second_moment(self, mode: int, slot: int = -1) -> Tuple[float, float]:
        """E[alpha_mode^2] at an output slot and its standard error."""
        return float(self.alpha_sq.mean[slot, mode]), float(self.alpha_sq.stderr[slot, mode])

    def mean_field(self, slot: int = -1) -> np.ndarray:
        return self.alpha.mean[slot]

    def ensemble_rows(self) -> List[tuple]:
        rows = []
        for i, t in enumerate(self.times):
            rows.append(
                (
                    float(t),
                    float(np.linalg.norm(self.alpha.mean[i])),
                    float(self.l2_sq.mean[i]),
                    float(self.l2_sq.stderr[i]),
                    float(self.h1_sq.mean[i]),
                    float(self.h1_sq.stderr[i]),
                    float(self.grad_integral.mean[i]),
                    float(self.grad_integral.stderr[i]),
                    float(self.h2_integral.mean[i]),
                    float(self.h2_integral.stderr[i]),
                )
            )
        return rows

    def holder_rows(self) -> List[tuple]:
        return [
            (lag * self.dt, lag, float(q), float(s))
            for lag, q, s in zip(self.lags, self.holder.mean, self.holder.stderr)
        ]

    def summary(self) -> Dict[str, object]:
        return {
            "M": self.M,
            "T": float(self.times[-1]),
            "dt": self.dt,
            "E_L2_sq_T": float(self.l2_sq.mean[-1]),
            "stderr_L2_sq_T": float(self.l2_sq.stderr[-1]),
            "E_grad_integral_T": float(self.grad_integral.mean[-1]),
            "E_H2_integral_T": float(self.h2_integral.mean[-1]),
            "E_ito_integral": float(self.ito_integral.mean),
            "stderr_ito_integral": float(self.ito_integral.stderr),
            "E_ito_residual": float(self.ito_residual.mean),
            "stderr_ito_residual": float(self.ito_residual.stderr),
            "checks": {name: report.to_dict() for name, report in self.checks.items()},
        }


def _run_batch(ws: AssemblyWorkspace, u0: SpectralVector, config: EnsembleConfig, indices: Sequence[int]) -> EnsembleStats:
    result = integrate_batch(ws, u0, config.path_config, indices, lags=config.lags)
    return EnsembleStats.from_batch(result, ws.basis.lam)


def run_ensemble(
    ws: AssemblyWorkspace,
    u0: SpectralVector,
    config: EnsembleConfig,
    threads: int = 1,
) -> EnsembleStats:
    """Streaming statistics over M paths with sample indices 0..M-1."""
    require_stochastic(ws)
    n_steps = config.path_config.n_steps
    moments = check_increment_moments(config.seed, config.dt)
    if not moments.passed:
        log.warning("ensemble.increment_moments_failed", **moments.details)

    batches = config.batches()
    log.info("ensemble.started", M=config.M, batches=len(batches), steps=n_steps, threads=threads, model=ws.model.name)
    if threads <= 1:
        parts = [_run_batch(ws, u0, config, batch) for batch in batches]
    else:
        with ThreadPoolExecutor(max_workers=threads) as executor:
            parts = list(executor.map(lambda batch: _run_batch(ws, u0, config, batch), batches))

    stats = reduce(lambda a, b: a.merge(b), parts)
    stats.checks["increment_moments"] = moments
    log.info(
        "ensemble.finished",
        M=stats.M,
        E_L2_sq_T=float(stats.l2_sq.mean[-1]),
        stderr=float(stats.l2_sq.stderr[-1]),
    )
    return stats


def stderr_of_norm(moments: RunningMoments, slot: int = -1) -> float:
    """Standard error of the mean field's L2 norm, from the per-coefficient standard errors."""
    return float(math.sqrt(np.sum(moments.stderr[slot] ** 2)))
