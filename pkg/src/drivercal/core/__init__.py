from .plugin_registry import PluginRegistry
from .trajectory_parser import SchemaError, TrajectoryParseError, TrajectoryParser
from .episode_extractor import EpisodeExtractor
from .idm import NonPositiveGapError
from .calibration_engine import CalibrationError, StagedSearch
from .fit_cache import FitCache
from .boosting import BoostingConfigError
from .population_generator import GenerationError, PopulationGenerator
from .analysis_engine import AnalysisError

__all__ = [
    "PluginRegistry",
    "SchemaError",
    "TrajectoryParseError",
    "TrajectoryParser",
    "EpisodeExtractor",
    "NonPositiveGapError",
    "CalibrationError",
    "StagedSearch",
    "FitCache",
    "BoostingConfigError",
    "GenerationError",
    "PopulationGenerator",
    "AnalysisError",
]
