import time
from pathlib import Path
from typing import Dict, List

import structlog

from commands.output import versions, write_json
from commands.problem import Problem, build_problem
from commands.schema import RunConfig
from core.errors import CheckFailure
from fields.checks import CheckReport, check_geometry_compat, check_growth, check_parabolicity, identity_suite
from galerkin.monitors import parabolicity_monitor

log = structlog.get_logger(__name__)


def model_checks(problem: Problem, config: RunConfig) -> Dict[str, CheckReport]:
    """Structural checks on the coefficient model; none of them raise."""
    lam = problem.model.lambda_samples(config.checks.lambda_samples)
    return {
        "parabolicity": check_parabolicity(problem.model, lam),
        "growth": check_growth(problem.model, lam),
        "geometry_compat": check_geometry_compat(problem.model, lam, tol=config.checks.compat_tolerance),
    }


def _identities_report(reports: List[CheckReport]) -> CheckReport:
    worst = max(reports, key=lambda r: r.value)
    return CheckReport(
        "identities",
        all(r.passed for r in reports),
        worst.value,
        worst.threshold,
        {r.name: r.to_dict() for r in reports},
    )


def run(config: RunConfig, out_dir: Path, threads: int = 1, seed: int = 0, **_) -> dict:
    """Identity suite plus model checks; exit 0 iff every required check passes."""
    started = time.perf_counter()
    problem = build_problem(config)
    checks = model_checks(problem, config)
    suite = identity_suite(
        problem.basis,
        seed=seed,
        trials=config.checks.identity_trials,
        tol=config.checks.identity_tolerance,
    )
    checks["identities"] = _identities_report(suite)

    required = list(dict.fromkeys(config.checks.required))
    failed = [name for name in required if not checks[name].passed]
    payload = {
        "command": "verify",
        "config": config.echo(),
        "basis": problem.basis.metadata(),
        "model": problem.model.describe(),
        "grid": list(problem.grid.shape),
        "checks": {name: report.to_dict() for name, report in checks.items()},
        "required": required,
        "failed": failed,
        "passed": not failed,
        "parabolicity_estimates": parabolicity_monitor(problem.ws, problem.u0.coeffs),
        "versions": versions(),
        "wall_time": time.perf_counter() - started,
    }
    if "json" in config.output.formats:
        write_json(out_dir / "run.json", payload)
    log.info("verify.finished", passed=not failed, failed=failed, model=problem.model.name)
    if failed:
        details = ", ".join(f"{name}={checks[name].value:.3e}" for name in failed)
        raise CheckFailure(f"required checks failed: {details}")
    return payload
