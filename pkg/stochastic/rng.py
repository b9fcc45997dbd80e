"""
Counter-based Wiener increments.

Every sample path owns a Philox stream keyed by (seed, sample_index); the
increment of step k is the k-th standard normal of that stream times sqrt(dt).
Paths can therefore be generated in any order, on any worker, and still come
out bit-identical.
"""

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from fields.checks import CheckReport

SEED_LIMIT = 2**64
# never handed to a sample path
RESERVED_SAMPLE_INDEX = 2**64 - 1
MOMENT_DRAWS = 10_000
MOMENT_SIGMAS = 5.0


def _check_key(seed: int, sample_index: int) -> None:
    if not 0 <= seed < SEED_LIMIT:
        raise ValueError(f"seed must be an unsigned 64-bit integer, got {seed}")
    if not 0 <= sample_index < SEED_LIMIT:
        raise ValueError(f"sample index must be an unsigned 64-bit integer, got {sample_index}")


def stream(seed: int, sample_index: int) -> np.random.Generator:
    seed, sample_index = int(seed), int(sample_index)
    _check_key(seed, sample_index)
    return np.random.Generator(np.random.Philox(key=(seed << 64) | sample_index))


def standard_normals(seed: int, sample_indices: Sequence[int], n_steps: int) -> np.ndarray:
    """(len(sample_indices), n_steps) standard normals, row i from the stream of sample_indices[i]."""
    out = np.empty((len(sample_indices), n_steps))
    for row, index in enumerate(sample_indices):
        out[row] = stream(seed, index).standard_normal(n_steps)
    return out


@dataclass(frozen=True, eq=False)
class WienerPath:
    seed: int
    sample_index: int
    dt: float
    increments: np.ndarray

    @classmethod
    def generate(cls, seed: int, sample_index: int, dt: float, n_steps: int) -> "WienerPath":
        if not dt > 0:
            raise ValueError(f"dt must be positive, got {dt}")
        increments = math.sqrt(dt) * stream(seed, sample_index).standard_normal(n_steps)
        increments.setflags(write=False)
        return cls(int(seed), int(sample_index), float(dt), increments)

    @property
    def n_steps(self) -> int:
        return self.increments.shape[0]

    @property
    def T(self) -> float:
        return self.n_steps * self.dt

    def values(self) -> np.ndarray:
        """W at the step times, starting from W(0) = 0."""
        return np.concatenate([[0.0], np.cumsum(self.increments)])

    def coarsen(self, factor: int) -> "WienerPath":
        """Sum blocks of `factor` increments: the same Brownian path seen at step factor*dt."""
        if factor < 1 or self.n_steps % factor:
            raise ValueError(f"cannot coarsen {self.n_steps} steps by {factor}")
        coarse = self.increments.reshape(-1, factor).sum(axis=1)
        coarse.setflags(write=False)
        return WienerPath(self.seed, self.sample_index, self.dt * factor, coarse)


def check_increment_moments(seed: int, dt: float, draws: int = MOMENT_DRAWS) -> CheckReport:
    """Mean and variance of a batch from the reserved stream, within 5 sigma of (0, dt)."""
    sample = math.sqrt(dt) * stream(seed, RESERVED_SAMPLE_INDEX).standard_normal(draws)
    mean = float(sample.mean())
    var = float(sample.var(ddof=1))
    mean_limit = MOMENT_SIGMAS * math.sqrt(dt / draws)
    var_limit = MOMENT_SIGMAS * dt * math.sqrt(2.0 / (draws - 1))
    passed = abs(mean) <= mean_limit and abs(var - dt) <= var_limit
    return CheckReport(
        "increment_moments",
        passed,
        abs(var - dt) / var_limit,
        1.0,
        {"mean": mean, "variance": var, "dt": dt, "draws": draws, "mean_limit": mean_limit, "variance_limit": var_limit},
    )
