"""
Run configuration.

A run is described by one TOML or YAML file checked into configs/. The file
is validated into a RunConfig tree; relative paths are resolved against the
directory of the file and every referenced input must exist.
"""

import logging
import tomllib
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple, Union

import numpy as np
import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from drivercal.models.calibration_models import Pooling, SearchSpace
from drivercal.models.idm_models import SimulationOptions
from drivercal.models.report_models import ThresholdMode
from drivercal.models.synth_models import PopulationSpec
from drivercal.models.trajectory_models import ColumnSchema, UnitSystem

logger = logging.getLogger(__name__)

COLUMN_PRESETS: Dict[str, ColumnSchema] = {"ngsim": ColumnSchema()}

ROLLOUT_SOURCES = ("idm_per_driver", "idm_shared", "boosted")


class ConfigError(Exception):
    """Raised when a run config is invalid or references missing inputs."""

    pass


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid")


class DataConfig(_Section):
    """Where the trajectories come from and how they are read."""

    name: str = "dataset"
    trajectories: List[Path] = Field(
        default_factory=list, description="Trajectory CSV files for ingest"
    )
    episodes: Optional[Path] = Field(
        default=None,
        description="Episode JSON used by fit/rollout/analyze (default <output>/episodes.json)",
    )
    schema_preset: str = "ngsim"
    columns: Dict[str, str] = Field(
        default_factory=dict, description="Per-field header overrides on the preset"
    )
    unit_system: UnitSystem = UnitSystem.FEET
    delimiter: str = ","
    min_length: int = Field(default=50, ge=2)

    def column_schema(self) -> ColumnSchema:
        if self.schema_preset not in COLUMN_PRESETS:
            raise ConfigError(
                f"Unknown column preset '{self.schema_preset}' "
                f"(available: {sorted(COLUMN_PRESETS)})"
            )
        base = COLUMN_PRESETS[self.schema_preset].model_dump()
        unknown = set(self.columns) - set(base)
        if unknown:
            raise ConfigError(f"Unknown column mapping fields: {sorted(unknown)}")
        return ColumnSchema(**{**base, **self.columns})


class SimulationConfig(_Section):
    dt: float = Field(default=0.1, gt=0)
    semi_implicit: bool = True
    clamp_desired_gap: bool = True

    def to_options(self) -> SimulationOptions:
        return SimulationOptions(**self.model_dump())


class CalibrationConfig(_Section):
    space: SearchSpace = Field(default_factory=SearchSpace)
    n_trials: int = Field(default=500, ge=1)
    seed: int = 0
    pooling: Pooling = Pooling.FRAMES
    keep_trial_log: bool = False
    noise_repeats: int = Field(default=3, ge=2)
    noise_drivers: int = Field(
        default=10, ge=1, description="Drivers whose refit noise is averaged"
    )


class SynthConfig(_Section):
    population: Optional[PopulationSpec] = None


class BoostingConfig(_Section):
    """Checked by the trainer so bad values surface as BoostingConfigError."""

    rounds: int = 2000
    max_depth: int = 4
    learning_rate: float = 0.1
    subsample: float = 1.0
    min_samples_leaf: int = 1
    seed: int = 0
    holdout_fraction: float = Field(default=0.2, ge=0, lt=1)
    model_path: Optional[Path] = Field(
        default=None, description="Saved boost_model.json to replay instead of training"
    )


class AnalysisConfig(_Section):
    accel_threshold: float = Field(default=2.0, gt=0)
    headway_cap: float = Field(default=5.0, gt=0)
    threshold_mode: ThresholdMode = ThresholdMode.PER_SECOND
    window_frames: int = Field(default=10, ge=1)
    histogram_bins: int = Field(default=20, ge=2)
    buckets: List[Tuple[int, int]] = Field(
        default_factory=lambda: [(100, 400), (400, 1000), (1000, 1_000_000)],
        description="Half-open ranges [min, max) of pooled frames per driver",
    )
    min_fit_length: int = Field(default=50, ge=2)
    cross_pairs: int = Field(default=1000, ge=1)
    alternative: str = "less"
    n_trials: Optional[int] = Field(
        default=None, ge=1, description="Trials per half fit (default: calibration.n_trials)"
    )
    expected_fraction: float = Field(default=0.95, gt=0, le=1)
    seed: int = 0

    @model_validator(mode="after")
    def _check_buckets(self) -> "AnalysisConfig":
        if self.alternative not in ("less", "two-sided", "greater"):
            raise ValueError(f"unknown test alternative '{self.alternative}'")
        ordered = sorted(self.buckets)
        for lower, upper in ordered:
            if not lower < upper:
                raise ValueError(f"bucket ({lower}, {upper}) is empty")
        for (_, upper), (lower, _) in zip(ordered, ordered[1:]):
            if lower < upper:
                raise ValueError("length buckets must not overlap")
        return self


class RolloutConfig(_Section):
    source: str = "idm_per_driver"
    n_episodes: int = Field(default=5, ge=1)
    seed: int = 0


class RunConfig(_Section):
    """Everything a drivercal command needs, loaded from one file."""

    data: DataConfig = Field(default_factory=DataConfig)
    simulation: SimulationConfig = Field(default_factory=SimulationConfig)
    calibration: CalibrationConfig = Field(default_factory=CalibrationConfig)
    synth: SynthConfig = Field(default_factory=SynthConfig)
    boosting: BoostingConfig = Field(default_factory=BoostingConfig)
    analysis: AnalysisConfig = Field(default_factory=AnalysisConfig)
    rollout: RolloutConfig = Field(default_factory=RolloutConfig)
    output_dir: Path = Path("output")
    jobs: int = Field(default=1, ge=1)
    formats: List[str] = Field(default_factory=lambda: ["csv", "json"])

    @property
    def episodes_path(self) -> Path:
        return self.data.episodes or self.output_dir / "episodes.json"


def _read_document(path: Path) -> Dict[str, Any]:
    suffix = path.suffix.lower()
    try:
        if suffix == ".toml":
            with open(path, "rb") as f:
                document = tomllib.load(f)
        elif suffix in (".yaml", ".yml"):
            with open(path, "r") as f:
                document = yaml.safe_load(f) or {}
        else:
            raise ConfigError(f"Unsupported config format '{suffix}' for {path}")
    except (tomllib.TOMLDecodeError, yaml.YAMLError) as e:
        raise ConfigError(f"Cannot parse {path}: {e}") from e
    if not isinstance(document, dict):
        raise ConfigError(f"{path} must contain a mapping at the top level")
    return document


def _resolve(base: Path, path: Optional[Path]) -> Optional[Path]:
    if path is None or path.is_absolute():
        return path
    return base / path


def load_run_config(path: Union[str, Path]) -> RunConfig:
    """Load, validate and resolve a run config.

    Raises:
        ConfigError: If the file is missing, malformed, fails validation or
            references a missing input file
    """
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"Config file not found: {path}")
    document = _read_document(path)
    try:
        config = RunConfig.model_validate(document)
    except ValidationError as e:
        raise ConfigError(f"Invalid config {path}: {e}") from e

    base = path.parent
    config.output_dir = _resolve(base, config.output_dir)
    config.data.episodes = _resolve(base, config.data.episodes)
    config.data.trajectories = [_resolve(base, p) for p in config.data.trajectories]
    config.boosting.model_path = _resolve(base, config.boosting.model_path)

    missing = [str(p) for p in config.data.trajectories if not p.exists()]
    if missing:
        raise ConfigError(f"Trajectory files not found: {missing}")
    if config.boosting.model_path is not None and not config.boosting.model_path.exists():
        raise ConfigError(f"Boost model not found: {config.boosting.model_path}")
    config.data.column_schema()
    if config.rollout.source not in ROLLOUT_SOURCES:
        raise ConfigError(
            f"Unknown rollout source '{config.rollout.source}' (expected one of {ROLLOUT_SOURCES})"
        )

    logger.info(f"Loaded run config from {path}")
    return config


def derive_seed(seed: int, stream: int) -> int:
    """Sub-seed number stream of a master seed."""
    return int(np.random.SeedSequence([seed, stream]).generate_state(1)[0])


def apply_overrides(
    config: RunConfig,
    out: Optional[Union[str, Path]] = None,
    seed: Optional[int] = None,
    jobs: Optional[int] = None,
    formats: Optional[List[str]] = None,
) -> RunConfig:
    """Apply command-line overrides to a loaded config.

    A master seed replaces every seed in the config with a derived one.
    """
    if out is not None:
        config.output_dir = Path(out)
    if jobs is not None:
        if jobs < 1:
            raise ConfigError("--jobs must be at least 1")
        config.jobs = jobs
    if formats:
        unknown = set(formats) - {"csv", "json", "svg"}
        if unknown:
            raise ConfigError(f"Unknown output formats: {sorted(unknown)}")
        config.formats = sorted(set(formats) | {"csv", "json"})
    if seed is not None:
        config.calibration.seed = derive_seed(seed, 1)
        config.boosting.seed = derive_seed(seed, 2)
        config.analysis.seed = derive_seed(seed, 3)
        config.rollout.seed = derive_seed(seed, 4)
        if config.synth.population is not None:
            config.synth.population = config.synth.population.model_copy(
                update={"seed": derive_seed(seed, 5)}
            )
    return config
