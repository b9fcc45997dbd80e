import argparse
import sys
import time
from pathlib import Path
from typing import Callable, Dict, List, Optional

import structlog
from dotenv import load_dotenv

from commands import convergence, solve, solve_sde, verify
from commands.schema import RunConfig, load_config
from core.errors import GalerkinError
from core.log import configure_logging
from core.settings import get_settings
from db.database import get_db, init_db, save_run

# Load environment variables
load_dotenv()

log = structlog.get_logger("main")

COMMANDS: Dict[str, Callable[..., dict]] = {
    "verify": verify.run,
    "solve": solve.run,
    "solve-sde": solve_sde.run,
    "convergence": convergence.run,
}


def _int_list(text: str) -> List[int]:
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def _float_list(text: str) -> List[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def _seed(text: str) -> int:
    value = int(text)
    if not 0 <= value < 2**64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return value


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="galerkin",
        description="Spectral Galerkin solver and verification harness for parabolic equations on tori and the sphere.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        cmd = sub.add_parser(name)
        cmd.add_argument("--config", required=True, help="run configuration (JSON)")
        cmd.add_argument("--out", default=None, help="output directory (overrides output.directory)")
        cmd.add_argument("--seed", type=_seed, default=None, help="override stochastic.seed")
        cmd.add_argument("--threads", type=int, default=None, help="worker threads (default GALERKIN_THREADS)")
        cmd.add_argument("--log-level", default=None)
        if name == "convergence":
            cmd.add_argument("--n-list", type=_int_list, default=None, help="e.g. 8,16,32")
            cmd.add_argument("--dt-list", type=_float_list, default=None, help="e.g. 1e-2,5e-3")
    return parser


def _with_seed(config: RunConfig, seed: Optional[int]) -> RunConfig:
    if seed is None:
        return config
    return config.model_copy(update={"stochastic": config.stochastic.model_copy(update={"seed": seed})})


def _record_run(**fields) -> None:
    """Append to the run log; never changes the command outcome."""
    try:
        init_db()
        gen = get_db()
        db = next(gen)
        try:
            save_run(db, **fields)
        finally:
            gen.close()
    except Exception as e:
        log.warning("runlog.failed", error=str(e))


def main(argv: Optional[List[str]] = None) -> int:
    settings = get_settings()
    args = build_parser().parse_args(argv)
    configure_logging(args.log_level or settings.log_level, settings.log_format)
    threads = max(1, args.threads or settings.threads)

    started = time.perf_counter()
    exit_code = 0
    error = None
    config = None
    out_dir = None
    try:
        config = _with_seed(load_config(args.config), args.seed)
        out_dir = Path(args.out or config.output.directory)
        options = {"threads": threads, "seed": config.stochastic.seed}
        if args.command == "convergence":
            options.update(n_list=args.n_list, dt_list=args.dt_list)
        log.info("command.started", command=args.command, config=args.config, out=str(out_dir), threads=threads)
        COMMANDS[args.command](config, out_dir, **options)
    except GalerkinError as exc:
        exit_code = exc.exit_code
        error = f"{type(exc).__name__}: {exc.detail}"
        log.error("command.failed", command=args.command, error=type(exc).__name__, detail=exc.detail, exit_code=exit_code)
    except Exception as exc:
        exit_code = 1
        error = f"{type(exc).__name__}: {exc}"
        log.exception("command.crashed", command=args.command)

    wall_time = time.perf_counter() - started
    log.info("command.finished", command=args.command, exit_code=exit_code, wall_time=round(wall_time, 3))
    if settings.run_log_enabled:
        _record_run(
            command=args.command,
            config_path=str(args.config),
            config_hash=config.config_hash() if config is not None else None,
            seed=str(config.stochastic.seed) if config is not None else None,
            threads=threads,
            exit_code=exit_code,
            error=error,
            wall_time=wall_time,
            out_dir=str(out_dir) if out_dir is not None else None,
        )
    return exit_code


if __name__ == "__main__":
    sys.exit(main())
