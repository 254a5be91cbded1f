"""Experiment definitions: parsing, validation and overrides."""

from __future__ import annotations

import dataclasses
import json
import math
import typing
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional, Sequence

from jsonschema import Draft202012Validator, ValidationError
from jsonschema.exceptions import best_match
from loguru import logger

from .errors import ConfigError, InvalidParameterError
from .master import SolverConfig, SteadyStateConfig
from .model import ConstantDrive, DriveEnvelope, ModelParams, PulseTrain
from .semiclassical import ClassicalSolverConfig, DampingConvention, LyapunovConfig
from .trajectories import QSDConfig, seed_stream
from .wigner import GridSpec

SCHEMA_PATH = Path(__file__).parent.parent / "docs" / "experiment_config.schema.json"

ENGINES = ("master", "qsd", "semiclassical", "all")
TASKS = (
    "bistability",
    "dynamics",
    "hysteresis",
    "amplitude_sweep",
    "scaling",
    "interference",
    "purity",
    "chaos",
    "lyapunov_sweep",
    "minmax",
)


@dataclass
class ModelSection:
    delta: float = 0.0
    chi: float = 0.0
    omega_drive: float = 0.0
    gamma: float = 1.0
    n_bath: float = 0.0

    def build(self) -> ModelParams:
        return ModelParams(
            delta=self.delta,
            chi=self.chi,
            omega_drive=self.omega_drive,
            gamma=self.gamma,
            n_bath=self.n_bath,
        )


@dataclass
class DriveSection:
    kind: str = "constant"
    t0: float = 0.0
    width: Optional[float] = None
    period: Optional[float] = None
    pulse_count: Optional[int] = None

    def build(self, width: Optional[float] = None, period: Optional[float] = None) -> DriveEnvelope:
        if self.kind == "constant":
            return ConstantDrive()
        return PulseTrain(
            t0=self.t0,
            width=width if width is not None else float(self.width or 0.0),
            period=period if period is not None else float(self.period or 0.0),
            pulse_count=self.pulse_count,
        )


@dataclass
class GridSection:
    extent: float = 5.0
    points: int = 201
    auto_expand: bool = True

    def build(self) -> GridSpec:
        return GridSpec.square(self.extent, self.points)


@dataclass
class EnsembleSection:
    trajectories: int = 50
    dt: float = 2e-4
    workers: int = 1
    calibrate: bool = False
    switching_time: float = 0.0


@dataclass
class SolverSection:
    rtol: float = 1e-8
    atol: float = 1e-10
    method: str = "RK45"
    steady_method: str = "integrate"
    steady_eps: float = 1e-10
    steady_max_time: float = 5000.0
    steady_polish: bool = True
    classical_rtol: float = 1e-10
    classical_atol: float = 1e-12


@dataclass
class PoincareSettings:
    points: int = 500
    transient: int = 100
    t0: Optional[float] = None
    alpha0: List[float] = field(default_factory=lambda: [0.0, 0.0])
    period: Optional[float] = None


@dataclass
class LyapunovSettings:
    d0: float = 1e-8
    renorm_periods: float = 0.1
    transient_periods: float = 50.0
    measure_periods: float = 200.0
    tolerance: float = 0.05
    classify: bool = False


@dataclass
class SweepSection:
    omega_values: List[float] = field(default_factory=list)
    check_omegas: List[float] = field(default_factory=list)
    scale_factors: List[float] = field(default_factory=list)
    widths: List[float] = field(default_factory=list)
    periods: List[float] = field(default_factory=list)
    snapshot_times: List[float] = field(default_factory=list)
    t0_schedule: Dict[str, List[List[float]]] = field(default_factory=dict)
    compare_conventions: bool = False


@dataclass
class ExperimentConfig:
    """A complete, serializable description of one run."""

    name: str = "custom"
    task: str = "dynamics"
    engine: str = "master"
    model: ModelSection = field(default_factory=ModelSection)
    drive: DriveSection = field(default_factory=DriveSection)
    damping_convention: str = DampingConvention.HALF.value
    fock_dim: int = 30
    t_final: float = 20.0
    samples: int = 201
    grid: GridSection = field(default_factory=GridSection)
    ensemble: EnsembleSection = field(default_factory=EnsembleSection)
    seeds: Optional[List[int]] = None
    solver: SolverSection = field(default_factory=SolverSection)
    poincare: PoincareSettings = field(default_factory=PoincareSettings)
    lyapunov: LyapunovSettings = field(default_factory=LyapunovSettings)
    sweep: SweepSection = field(default_factory=SweepSection)
    reference: Dict[str, float] = field(default_factory=dict)
    output_dir: Optional[str] = None

    def to_dict(self) -> Dict[str, Any]:
        return dataclasses.asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    @property
    def params(self) -> ModelParams:
        return self.model.build()

    @property
    def envelope(self) -> DriveEnvelope:
        return self.drive.build()

    @property
    def convention(self) -> DampingConvention:
        return DampingConvention(self.damping_convention)

    def seed_list(self) -> List[int]:
        if self.seeds is not None:
            return list(self.seeds)
        return list(range(1, self.ensemble.trajectories + 1))

    def solver_config(self) -> SolverConfig:
        return SolverConfig(rtol=self.solver.rtol, atol=self.solver.atol, method=self.solver.method)

    def steady_config(self) -> SteadyStateConfig:
        return SteadyStateConfig(
            eps=self.solver.steady_eps,
            max_time=self.solver.steady_max_time,
            method=self.solver.steady_method,
            polish=self.solver.steady_polish,
            solver=self.solver_config(),
        )

    def classical_config(self) -> ClassicalSolverConfig:
        return ClassicalSolverConfig(rtol=self.solver.classical_rtol, atol=self.solver.classical_atol)

    def qsd_config(self, snapshot_times: Sequence[float] = ()) -> QSDConfig:
        return QSDConfig(
            dt=self.ensemble.dt,
            snapshot_times=tuple(snapshot_times),
            workers=self.ensemble.workers,
        )

    def lyapunov_config(
        self,
        t0: float = 0.0,
        convention: Optional[DampingConvention] = None,
        period: Optional[float] = None,
    ) -> LyapunovConfig:
        settings = self.lyapunov
        return LyapunovConfig(
            d0=settings.d0,
            renorm_periods=settings.renorm_periods,
            transient_periods=settings.transient_periods,
            measure_periods=settings.measure_periods,
            t0=t0,
            tolerance=settings.tolerance,
            convention=convention or self.convention,
            period=period,
            solver=self.classical_config(),
        )

    def output_times(self, t_start: float = 0.0) -> List[float]:
        step = (self.t_final - t_start) / (self.samples - 1)
        return [t_start + k * step for k in range(self.samples - 1)] + [self.t_final]

    def with_overrides(self, **overrides: Any) -> "ExperimentConfig":
        """Copy with CLI overrides applied; None values are ignored."""
        data = self.to_dict()
        if overrides.get("trajectories") is not None:
            data["ensemble"]["trajectories"] = overrides["trajectories"]
            if overrides.get("seeds") is None:
                data["seeds"] = None
        if overrides.get("dt") is not None:
            data["ensemble"]["dt"] = overrides["dt"]
        if overrides.get("workers") is not None:
            data["ensemble"]["workers"] = overrides["workers"]
        if overrides.get("seeds") is not None:
            data["seeds"] = list(overrides["seeds"])
        for key in ("engine", "damping_convention", "output_dir"):
            if overrides.get(key) is not None:
                data[key] = overrides[key]
        return parse_config(data)

    def validate(self) -> "ExperimentConfig":
        """Check the config against the schema, then the rules spanning several fields.

        Raises:
            ConfigError: Naming the offending field.
        """
        check_schema(self.to_dict())
        bad = _non_finite(self.to_dict())
        if bad is not None:
            raise ConfigError("must be finite", bad)

        if self.drive.kind == "pulse_train":
            if self.drive.width is None and not self.sweep.widths:
                raise ConfigError("required for a pulse train", "drive.width")
            if self.drive.period is None and not self.sweep.periods:
                raise ConfigError("required for a pulse train", "drive.period")
        if self.lyapunov.measure_periods <= 10 * self.lyapunov.renorm_periods:
            raise ConfigError("must be much longer than renorm_periods", "lyapunov.measure_periods")
        if self.seeds is not None and len({seed_stream(s) for s in self.seeds}) != len(self.seeds):
            raise ConfigError("must map to distinct 64-bit streams", "seeds")

        try:
            self.model.build()
            if self.drive.kind == "constant" or None not in (self.drive.width, self.drive.period):
                self.drive.build()
        except InvalidParameterError as e:
            raise ConfigError(str(e), "model") from e
        return self


@lru_cache(maxsize=1)
def _schema_validator() -> Draft202012Validator:
    schema = json.loads(SCHEMA_PATH.read_text(encoding="utf-8"))
    Draft202012Validator.check_schema(schema)
    logger.debug(f"Loaded experiment schema from {SCHEMA_PATH}")
    return Draft202012Validator(schema)


def _error_path(error: ValidationError) -> str:
    path = ""
    for part in error.absolute_path:
        if isinstance(part, int):
            path += f"[{part}]"
        else:
            path = f"{path}.{part}" if path else str(part)
    if error.validator == "additionalProperties" and isinstance(error.instance, Mapping):
        known = error.schema.get("properties", {})
        extra = sorted(str(key) for key in error.instance if key not in known)
        if extra:
            path = f"{path}.{extra[0]}" if path else extra[0]
    return path


def check_schema(data: Any) -> None:
    """Validate a decoded config document against docs/experiment_config.schema.json.

    Raises:
        ConfigError: For the most relevant violation, with its dotted field path.
    """
    error = best_match(_schema_validator().iter_errors(data))
    if error is not None:
        raise ConfigError(error.message, _error_path(error))


def _non_finite(value: Any, path: str = "") -> Optional[str]:
    if isinstance(value, float):
        return None if math.isfinite(value) else path
    if isinstance(value, Mapping):
        items = ((f"{path}.{k}" if path else str(k), v) for k, v in value.items())
    elif isinstance(value, list):
        items = ((f"{path}[{i}]", v) for i, v in enumerate(value))
    else:
        return None
    for child_path, child in items:
        found = _non_finite(child, child_path)
        if found is not None:
            return found
    return None


def _coerce(value: Any, annotation: Any) -> Any:
    """Convert a schema-checked JSON value to the annotated field type."""
    if value is None:
        return None
    origin = typing.get_origin(annotation)
    args = typing.get_args(annotation)
    if origin is typing.Union:
        return _coerce(value, next(a for a in args if a is not type(None)))
    if dataclasses.is_dataclass(annotation):
        return _from_mapping(annotation, value)
    if origin is list:
        return [_coerce(item, args[0]) for item in value]
    if origin is dict:
        return {str(k): _coerce(v, args[1]) for k, v in value.items()}
    if annotation is float:
        return float(value)
    return value


def _from_mapping(cls: Any, data: Mapping[str, Any]) -> Any:
    hints = typing.get_type_hints(cls)
    return cls(**{key: _coerce(value, hints[key]) for key, value in data.items()})


def parse_config(data: Mapping[str, Any]) -> ExperimentConfig:
    """Build and validate an ExperimentConfig from a decoded JSON object."""
    if not isinstance(data, Mapping):
        raise ConfigError("top level must be a JSON object")
    check_schema(data)
    config = _from_mapping(ExperimentConfig, data)
    return config.validate()


def load_config(path: str | Path) -> ExperimentConfig:
    """Read an ExperimentConfig from a JSON file.

    Raises:
        ConfigError: On I/O errors, JSON syntax errors (with line) or schema violations.
    """
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as e:
        raise ConfigError(f"cannot read config file: {e}") from e
    try:
        data = json.loads(text)
    except json.JSONDecodeError as e:
        raise ConfigError(e.msg, line=e.lineno) from e
    return parse_config(data)
