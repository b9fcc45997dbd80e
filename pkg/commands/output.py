"""
Artefact writers. CSV numbers use a fixed 17-significant-digit scientific
format so identical runs produce byte-identical files.
"""

import csv
import json
import math
import platform
from pathlib import Path
from typing import Any, Iterable, Sequence

import numpy as np
import pydantic
import scipy
import structlog

log = structlog.get_logger(__name__)

FLOAT_FORMAT = "%.16e"


def _cell(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return "1" if value else "0"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return FLOAT_FORMAT % float(value)


def write_csv(path: Path, columns: Sequence[str], rows: Iterable[Sequence]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    count = 0
    with path.open("w", newline="") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(columns)
        for row in rows:
            writer.writerow([_cell(v) for v in row])
            count += 1
    log.debug("output.csv", path=str(path), rows=count)
    return path


def jsonable(value: Any) -> Any:
    """Plain JSON types; non-finite floats become null."""
    if isinstance(value, dict):
        return {str(k): jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return jsonable(value.tolist())
    if isinstance(value, (bool, np.bool_)):
        return bool(value)
    if isinstance(value, (int, np.integer)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        value = float(value)
        return value if math.isfinite(value) else None
    return value


def write_json(path: Path, payload: dict) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(jsonable(payload), indent=2, sort_keys=True, allow_nan=False) + "\n")
    return path


def versions() -> dict:
    return {
        "python": platform.python_version(),
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "pydantic": pydantic.VERSION,
    }


def snapshot_columns(coordinate_names: Sequence[str]) -> tuple:
    return ("t", *coordinate_names, "u")


def snapshot_rows(times: Sequence[float], nodes: np.ndarray, values: np.ndarray):
    """One row per (output time, node); values has shape (n_out, n_nodes)."""
    for t, u in zip(times, values):
        for x, value in zip(nodes, u):
            yield (t, *x, value)
