"""drivercal: car-following calibration and driver-behaviour analysis.

Fits the Intelligent Driver Model per driver or shared across a dataset,
trains a boosted-tree baseline, synthesizes driver populations with known
ground truth and runs diversity, parameter-distribution and consistency
studies over them.
"""

from drivercal.config import ConfigError, RunConfig, load_run_config
from drivercal.core.analysis_engine import (
    AnalysisError,
    consistency_experiment,
    diversity_metrics,
    param_distribution,
)
from drivercal.core.boosting import (
    BoostingConfigError,
    build_training_set,
    predict_step,
    rollout_boosted,
    train,
)
from drivercal.core.calibration_engine import (
    CalibrationError,
    estimate_fit_noise,
    fit,
    fit_per_driver,
    fit_shared,
    grid_search,
    objective,
)
from drivercal.core.episode_extractor import extract_episodes, load_episodes, summarize
from drivercal.core.fit_cache import FitCache
from drivercal.core.idm import NonPositiveGapError, idm_acceleration, rollout, step
from drivercal.core.plugin_registry import PluginRegistry
from drivercal.core.population_generator import GenerationError, generate
from drivercal.core.trajectory_parser import SchemaError, TrajectoryParseError, parse_csv
from drivercal.handlers.base_profile_handler import BaseProfileHandler

__version__ = "0.3.0"

__all__ = [
    # Configuration
    "ConfigError",
    "RunConfig",
    "load_run_config",
    # Trajectory data
    "SchemaError",
    "TrajectoryParseError",
    "parse_csv",
    "extract_episodes",
    "load_episodes",
    "summarize",
    # Dynamics and calibration
    "NonPositiveGapError",
    "idm_acceleration",
    "step",
    "rollout",
    "CalibrationError",
    "objective",
    "fit",
    "fit_per_driver",
    "fit_shared",
    "estimate_fit_noise",
    "grid_search",
    "FitCache",
    # Boosted baseline
    "BoostingConfigError",
    "build_training_set",
    "train",
    "predict_step",
    "rollout_boosted",
    # Synthesis
    "GenerationError",
    "generate",
    "PluginRegistry",
    "BaseProfileHandler",
    # Analyses
    "AnalysisError",
    "diversity_metrics",
    "param_distribution",
    "consistency_experiment",
    # Version
    "__version__",
]
