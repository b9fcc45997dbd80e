import os
from dataclasses import dataclass

from dotenv import load_dotenv

# Load environment variables
load_dotenv()


@dataclass(frozen=True)
class Settings:
    log_level: str
    log_format: str
    threads: int
    database_url: str
    run_log_enabled: bool


def get_settings() -> Settings:
    """Read the environment layer; CLI flags override these values."""
    return Settings(
        log_level=os.getenv("GALERKIN_LOG_LEVEL", "INFO").upper(),
        log_format=os.getenv("GALERKIN_LOG_FORMAT", "console"),
        threads=max(1, int(os.getenv("GALERKIN_THREADS", "1"))),
        database_url=os.getenv("DATABASE_URL", "sqlite:///./runs.db"),
        run_log_enabled=os.getenv("GALERKIN_RUN_LOG", "1") not in {"0", "false", "False"},
    )
