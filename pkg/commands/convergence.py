"""
Error tables over (n, dt).

Errors are measured against the analytic solution when the problem has one
(flux-free, lam-linear diffusion with a diagonal Galerkin operator), otherwise
against a reference run at the largest n and smallest dt. Coefficient vectors
of different n compare directly because the bases are nested.
"""

import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional, Sequence

import numpy as np
import structlog

from commands.output import versions, write_csv, write_json
from commands.problem import Problem, build_problem
from commands.schema import RunConfig
from commands.solve import solver_config
from integrate.solver import solve
from spectral.ops import SpectralVector, tail_bound

log = structlog.get_logger(__name__)

ERROR_COLUMNS = ("n", "dt", "L2_err", "H1_err", "observed_rate", "tail_bound")


@dataclass
class ConvergenceRow:
    n: int
    dt: float
    L2_err: float
    H1_err: float
    observed_rate: float = math.nan
    tail_bound: float = 0.0

    def as_tuple(self):
        return (self.n, self.dt, self.L2_err, self.H1_err, self.observed_rate, self.tail_bound)


@dataclass
class _Final:
    problem: Problem
    alpha: np.ndarray


def analytic_final(problem: Problem, T: float) -> Optional[np.ndarray]:
    """exp(L T) alpha0 when L is diagonal and there is no flux; None otherwise."""
    ws = problem.ws
    if ws.model.flux_terms or not ws.model.is_linear_diffusion:
        return None
    L = ws.linear_operator()
    diagonal = np.diag(L)
    off = L - np.diag(diagonal)
    if np.abs(off).max(initial=0.0) > 1e-12 * max(1.0, np.abs(diagonal).max()):
        return None
    return np.exp(diagonal * T) * problem.u0.coeffs


def _solve_final(config: RunConfig, n: int, dt: float) -> _Final:
    problem = build_problem(config, n=n)
    result = solve(problem.ws, problem.u0, solver_config(config, dt=dt))
    return _Final(problem, result.final.alpha)


def _errors_against(alpha: np.ndarray, reference: np.ndarray, lam_ref: np.ndarray):
    n = alpha.shape[0]
    diff = reference.copy()
    diff[:n] -= alpha
    return float(np.sqrt(diff @ diff)), float(np.sqrt((lam_ref**2 * diff) @ diff))


def observed_rates(rows: List[ConvergenceRow], by_dt: bool) -> None:
    """Rate against the previous row in the same sweep: order in dt, or decay exponent in n."""
    for prev, row in zip(rows, rows[1:]):
        same_sweep = prev.n == row.n if by_dt else prev.dt == row.dt
        if not same_sweep or row.L2_err <= 0 or prev.L2_err <= 0:
            continue
        scale = prev.dt / row.dt if by_dt else row.n / prev.n
        if scale != 1.0:
            row.observed_rate = math.log(prev.L2_err / row.L2_err) / math.log(scale)


def convergence_table(
    config: RunConfig,
    n_list: Sequence[int],
    dt_list: Sequence[float],
    threads: int = 1,
) -> List[ConvergenceRow]:
    section = config.convergence
    pairs = [(int(n), float(dt)) for n in n_list for dt in dt_list]
    T = config.solver.T

    def job(pair):
        return _solve_final(config, *pair)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as executor:
            finals = list(executor.map(job, pairs))
    else:
        finals = [job(pair) for pair in pairs]

    reference = None
    if section.analytic == "off" or analytic_final(finals[0].problem, T) is None:
        ref_n = section.reference_n or max(n_list)
        ref_dt = section.reference_dt or min(dt_list)
        reference = _solve_final(config, ref_n, ref_dt)
        log.info("convergence.reference", n=ref_n, dt=ref_dt)

    rows = []
    for (n, dt), final in zip(pairs, finals):
        if reference is None:
            exact = analytic_final(final.problem, T)
            l2, h1 = _errors_against(final.alpha, exact, final.problem.basis.lam)
            bound = 0.0
        else:
            ref_basis = reference.problem.basis
            if n > ref_basis.n:
                raise ValueError(f"n={n} exceeds the reference basis size {ref_basis.n}")
            l2, h1 = _errors_against(final.alpha, reference.alpha, ref_basis.lam)
            bound = tail_bound(ref_basis, SpectralVector(reference.alpha, ref_basis.basis_id), n)
        rows.append(ConvergenceRow(n, dt, l2, h1, tail_bound=bound))
    observed_rates(rows, by_dt=len(dt_list) > 1)
    return rows


def run(
    config: RunConfig,
    out_dir: Path,
    threads: int = 1,
    n_list: Optional[Sequence[int]] = None,
    dt_list: Optional[Sequence[float]] = None,
    **_,
) -> dict:
    """errors.csv and run.json for a sweep over n_list x dt_list."""
    started = time.perf_counter()
    n_list = list(n_list or config.convergence.n_list or [config.solver.n])
    dt_list = list(dt_list or config.convergence.dt_list or [config.solver.dt])
    rows = convergence_table(config, n_list, dt_list, threads=threads)

    if "csv" in config.output.formats:
        write_csv(out_dir / "errors.csv", ERROR_COLUMNS, [row.as_tuple() for row in rows])
    payload = {
        "command": "convergence",
        "config": config.echo(),
        "n_list": n_list,
        "dt_list": dt_list,
        "rows": [dict(zip(ERROR_COLUMNS, row.as_tuple())) for row in rows],
        "threads": threads,
        "versions": versions(),
        "wall_time": time.perf_counter() - started,
    }
    if "json" in config.output.formats:
        write_json(out_dir / "run.json", payload)
    log.info("convergence.written", out=str(out_dir), rows=len(rows))
    return payload
