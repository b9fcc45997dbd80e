import time
from pathlib import Path

import numpy as np
import structlog

from commands.output import versions, write_csv, write_json
from commands.problem import Problem, build_problem
from commands.schema import RunConfig
from commands.verify import model_checks
from core.errors import ConfigError
from galerkin.assembly import AssemblyWorkspace
from stochastic.checks import ou_moment_check, stochastic_checks
from stochastic.em import PathConfig, simulate_path
from stochastic.ensemble import ENSEMBLE_COLUMNS, HOLDER_COLUMNS, EnsembleConfig, run_ensemble

log = structlog.get_logger(__name__)

PATH_COLUMNS = ("t", "L2", "H1", "grad_integral")


def ensemble_config(config: RunConfig) -> EnsembleConfig:
    section = config.stochastic
    return EnsembleConfig(
        M=section.M,
        T=config.solver.T,
        dt=config.solver.dt,
        seed=section.seed,
        output_stride=config.solver.output_stride,
        lags=tuple(section.lags),
        batch_size=section.batch_size,
    )


def _has_additive_noise(ws: AssemblyWorkspace) -> bool:
    return all(p.constant_value is not None for p, _ in ws.model.noise_terms)


def deterministic_euler(ws: AssemblyWorkspace, alpha0: np.ndarray, dt: float, n_steps: int) -> np.ndarray:
    """Forward Euler on the drift: the ensemble mean of EM for linear drift and additive noise."""
    alpha = alpha0.copy()
    for _ in range(n_steps):
        alpha = alpha + dt * ws.drift(alpha)
    return alpha


def _write_path_monitors(problem: Problem, config: RunConfig, out_dir: Path) -> None:
    path_config = PathConfig(
        T=config.solver.T, dt=config.solver.dt, seed=config.stochastic.seed, output_stride=config.solver.output_stride
    )
    for index in range(min(config.output.path_monitors, config.stochastic.M)):
        trajectory = simulate_path(problem.ws, problem.u0, path_config, sample_index=index)
        write_csv(out_dir / "paths" / f"path_{index:05d}.csv", PATH_COLUMNS, trajectory.monitor_rows(problem.ws))


def run(config: RunConfig, out_dir: Path, threads: int = 1, **_) -> dict:
    """Monte Carlo ensemble: ensemble.csv, holder.csv and run.json."""
    if not config.stochastic.enabled:
        raise ConfigError("solve-sde needs stochastic.enabled = true")
    if config.solver.eps > 0:
        log.warning("solve_sde.eps_ignored", eps=config.solver.eps)
    started = time.perf_counter()
    problem = build_problem(config)
    ws = problem.ws
    cfg = ensemble_config(config)
    stats = run_ensemble(ws, problem.u0, cfg, threads=threads)

    deterministic = None
    if not ws.model.flux_terms and _has_additive_noise(ws):
        deterministic = deterministic_euler(ws, problem.u0.coeffs, cfg.dt, cfg.path_config.n_steps)
    stats.checks.update(stochastic_checks(stats, ws, problem.u0, deterministic))
    mode = config.stochastic.oracle_mode
    if mode is not None:
        if mode >= ws.n:
            raise ConfigError(f"oracle_mode {mode} is outside a basis of {ws.n} modes")
        stats.checks["ou_second_moment"] = ou_moment_check(stats, ws, problem.u0, mode)

    if "csv" in config.output.formats:
        write_csv(out_dir / "ensemble.csv", ENSEMBLE_COLUMNS, stats.ensemble_rows())
        write_csv(out_dir / "holder.csv", HOLDER_COLUMNS, stats.holder_rows())
        _write_path_monitors(problem, config, out_dir)

    payload = {
        "command": "solve-sde",
        "config": config.echo(),
        "basis": problem.basis.metadata(),
        "model": problem.model.describe(),
        "grid": list(problem.grid.shape),
        "checks": {name: report.to_dict() for name, report in model_checks(problem, config).items()},
        "ensemble": stats.summary(),
        "threads": threads,
        "versions": versions(),
        "wall_time": time.perf_counter() - started,
    }
    if "json" in config.output.formats:
        write_json(out_dir / "run.json", payload)
    log.info("solve_sde.written", out=str(out_dir), M=stats.M)
    return payload
