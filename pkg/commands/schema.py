"""
Run configuration files.

JSON documents validated by pydantic; every section forbids unknown keys and
rejects non-finite floats. `schema_version` must be 1.
"""

import hashlib
import json
import math
from pathlib import Path
from typing import Dict, List, Literal, Optional, Tuple, Union

from pydantic import (
    BaseModel,
    ConfigDict,
    Field,
    NonNegativeFloat,
    NonNegativeInt,
    PositiveFloat,
    PositiveInt,
    ValidationError,
    field_validator,
    model_validator,
)

from core.errors import ConfigError
from geometry.manifolds import ManifoldKind, ManifoldSpec

CheckName = Literal["parabolicity", "growth", "geometry_compat", "identities"]
PresetName = Literal["constant", "cosine_bump", "sine"]


class StrictModel(BaseModel):
    model_config = ConfigDict(extra="forbid", allow_inf_nan=False)


class ManifoldConfig(StrictModel):
    kind: ManifoldKind
    resolution: Optional[Union[PositiveInt, List[PositiveInt]]] = None
    periods: Optional[List[PositiveFloat]] = None

    def spec(self) -> ManifoldSpec:
        if self.kind is ManifoldKind.SPHERE2:
            if self.periods:
                raise ConfigError("the sphere takes no periods")
            return ManifoldSpec.sphere2()
        flat = ManifoldSpec.torus1 if self.kind is ManifoldKind.TORUS1 else ManifoldSpec.torus2
        if self.periods is None:
            return flat()
        expected = 1 if self.kind is ManifoldKind.TORUS1 else 2
        if len(self.periods) != expected:
            raise ConfigError(f"{self.kind.value} takes {expected} period(s), got {len(self.periods)}")
        return flat(self.periods[0]) if expected == 1 else flat(tuple(self.periods))


class ModelConfig(StrictModel):
    name: str
    parameters: Dict[str, float] = Field(default_factory=dict)
    lambda_range: Optional[Tuple[float, float]] = None
    truncate: bool = False

    @field_validator("lambda_range")
    @classmethod
    def increasing(cls, value):
        if value is not None and not value[0] < value[1]:
            raise ValueError("lambda_range must be increasing")
        return value


class PresetData(StrictModel):
    name: PresetName
    value: float = 0.0
    offset: float = 0.5
    amplitude: float = 0.25
    wavenumber: PositiveInt = 1


class InitialConfig(StrictModel):
    type: Literal["modes", "function_preset"]
    data: Union[List[Tuple[NonNegativeInt, float]], PresetData]

    @model_validator(mode="after")
    def data_matches_type(self):
        if self.type == "modes" and not isinstance(self.data, list):
            raise ValueError("'modes' data is a list of [index, value] pairs")
        if self.type == "function_preset" and not isinstance(self.data, PresetData):
            raise ValueError("'function_preset' data is an object with a preset name")
        return self


class SolverSection(StrictModel):
    n: PositiveInt
    dt: PositiveFloat
    T: PositiveFloat
    scheme: Literal["auto", "rk4", "imex"] = "auto"
    eps: NonNegativeFloat = 0.0
    output_stride: PositiveInt = 1
    energy_tolerance: PositiveFloat = 1e-4

    @model_validator(mode="after")
    def whole_steps(self):
        steps = round(self.T / self.dt)
        if steps < 1 or abs(steps * self.dt - self.T) > 1e-9 * self.T:
            raise ValueError(f"T={self.T} must be a whole number of steps dt={self.dt}")
        return self


class StochasticConfig(StrictModel):
    enabled: bool = False
    M: PositiveInt = 1000
    seed: int = Field(default=0, ge=0, lt=2**64)
    phi_name: str = "additive_mode"
    sigma: NonNegativeFloat = 0.3
    phi_parameters: Dict[str, float] = Field(default_factory=dict)
    lags: List[PositiveInt] = Field(default_factory=lambda: [1, 10, 100])
    batch_size: PositiveInt = 256
    oracle_mode: Optional[PositiveInt] = None


class OutputConfig(StrictModel):
    directory: str = "out"
    formats: List[Literal["csv", "json"]] = Field(default_factory=lambda: ["csv", "json"])
    snapshots: bool = True
    path_monitors: NonNegativeInt = 0


class ChecksConfig(StrictModel):
    required: List[CheckName] = Field(default_factory=lambda: ["parabolicity", "identities"])
    lambda_samples: PositiveInt = 9
    identity_trials: PositiveInt = 5
    identity_tolerance: PositiveFloat = 1e-8
    compat_tolerance: PositiveFloat = 1e-8
    entropy: bool = False


class ConvergenceConfig(StrictModel):
    n_list: List[PositiveInt] = Field(default_factory=list)
    dt_list: List[PositiveFloat] = Field(default_factory=list)
    reference_n: Optional[PositiveInt] = None
    reference_dt: Optional[PositiveFloat] = None
    analytic: Literal["auto", "off"] = "auto"


class RunConfig(StrictModel):
    schema_version: Literal[1]
    manifold: ManifoldConfig
    model: ModelConfig
    initial: InitialConfig
    solver: SolverSection
    stochastic: StochasticConfig = Field(default_factory=StochasticConfig)
    output: OutputConfig = Field(default_factory=OutputConfig)
    checks: ChecksConfig = Field(default_factory=ChecksConfig)
    convergence: ConvergenceConfig = Field(default_factory=ConvergenceConfig)

    def echo(self) -> dict:
        return self.model_dump(mode="json")

    def config_hash(self) -> str:
        canonical = json.dumps(self.echo(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canonical.encode()).hexdigest()


def _describe(exc: ValidationError) -> str:
    parts = []
    for error in exc.errors():
        where = ".".join(str(p) for p in error["loc"]) or "<root>"
        parts.append(f"{where}: {error['msg']}")
    return "; ".join(parts)


def parse_config(data: dict) -> RunConfig:
    try:
        return RunConfig.model_validate(data)
    except ValidationError as exc:
        raise ConfigError(f"invalid run configuration: {_describe(exc)}") from exc


def load_config(path: Union[str, Path]) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError(f"config {path} must be a JSON object")
    return parse_config(data)


def finite_or_none(value: Optional[float]) -> Optional[float]:
    """JSON has no inf/nan; report them as null."""
    if value is None or not math.isfinite(value):
        return None
    return value
