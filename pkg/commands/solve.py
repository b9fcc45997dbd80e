import time
from pathlib import Path
from typing import Optional

import numpy as np
import structlog

from commands.output import snapshot_columns, snapshot_rows, versions, write_csv, write_json
from commands.problem import build_problem
from commands.schema import RunConfig
from commands.verify import model_checks
from core.errors import Blowup, EnergyViolation
from galerkin.monitors import Entropy, entropy_residual, parabolicity_monitor
from integrate.solver import MONITOR_COLUMNS, SolverConfig, SolverRun, solve

log = structlog.get_logger(__name__)


def solver_config(config: RunConfig, dt: Optional[float] = None) -> SolverConfig:
    section = config.solver
    return SolverConfig(
        dt=dt or section.dt,
        T=section.T,
        scheme=section.scheme,
        output_stride=section.output_stride,
        energy_tolerance=section.energy_tolerance,
    )


def _entropy_summary(problem, run: SolverRun, compat) -> dict:
    out = {}
    for entropy in (Entropy.quadratic(), Entropy.upper(), Entropy.lower()):
        report = entropy_residual(problem.ws, run.times, run.alphas, entropy, compat=compat)
        out[entropy.name] = {"max_D": float(report.D.max()), "passed": report.passed}
    return out


def run(config: RunConfig, out_dir: Path, threads: int = 1, **_) -> dict:
    """Deterministic trajectory: monitors.csv, snapshots.csv and run.json."""
    started = time.perf_counter()
    problem = build_problem(config)
    checks = model_checks(problem, config)
    payload = {
        "command": "solve",
        "config": config.echo(),
        "basis": problem.basis.metadata(),
        "model": problem.model.describe(),
        "grid": list(problem.grid.shape),
        "checks": {name: report.to_dict() for name, report in checks.items()},
        "versions": versions(),
    }
    write_json_output = "json" in config.output.formats

    try:
        result = solve(problem.ws, problem.u0, solver_config(config))
    except (Blowup, EnergyViolation) as exc:
        payload["error"] = {"type": type(exc).__name__, "detail": exc.detail, "t": exc.t}
        payload["wall_time"] = time.perf_counter() - started
        if write_json_output:
            write_json(out_dir / "run.json", payload)
        raise

    if "csv" in config.output.formats:
        write_csv(out_dir / "monitors.csv", MONITOR_COLUMNS, result.monitor_table())
        if config.output.snapshots:
            values = result.alphas @ problem.basis.values
            write_csv(
                out_dir / "snapshots.csv",
                snapshot_columns(problem.coordinate_names),
                snapshot_rows(result.times, problem.grid.nodes, values),
            )

    psi = np.zeros(problem.basis.n)
    psi[min(1, problem.basis.n - 1)] = 1.0
    payload.update(
        {
            "scheme": result.scheme.value,
            "rk4_substeps": result.substeps,
            "run_checks": {name: report.to_dict() for name, report in result.checks.items()},
            "max_energy_residual": result.ledger.max_residual,
            "weak_residual": result.weak_residual(psi),
            "range": {
                "min_u": min(row.min_u for row in result.monitors),
                "max_u": max(row.max_u for row in result.monitors),
            },
            "parabolicity_estimates": parabolicity_monitor(problem.ws, result.final.alpha),
            "solver_wall_time": result.wall_time,
        }
    )
    if config.checks.entropy:
        if checks["geometry_compat"].passed:
            payload["entropy"] = _entropy_summary(problem, result, checks["geometry_compat"])
        else:
            payload["entropy"] = {"skipped": "model is not geometry compatible"}
    payload["wall_time"] = time.perf_counter() - started
    if write_json_output:
        write_json(out_dir / "run.json", payload)
    log.info("solve.written", out=str(out_dir), steps=int(round(config.solver.T / config.solver.dt)))
    return payload
