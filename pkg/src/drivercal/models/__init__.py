from .trajectory_models import (
    AnomalyKind,
    ColumnSchema,
    DatasetSummary,
    EpisodeFile,
    FollowEpisode,
    TrajectoryFrame,
    UnitSystem,
    VehicleClass,
)
from .idm_models import EgoState, IdmParams, RolloutResult, SimulationOptions
from .calibration_models import (
    CalibrationResult,
    FitNoiseEstimate,
    Pooling,
    SearchSpace,
    TrialRecord,
)
from .boost_models import BoostModel, FeatureVector, RegressionTree, TrainingSample
from .synth_models import GroundTruthLabel, LeaderProfileKind, PopulationSpec
from .report_models import (
    ConsistencyReport,
    DiversityReport,
    ParamDistributionReport,
    ThresholdMode,
)

__all__ = [
    "AnomalyKind",
    "ColumnSchema",
    "DatasetSummary",
    "EpisodeFile",
    "FollowEpisode",
    "TrajectoryFrame",
    "UnitSystem",
    "VehicleClass",
    "EgoState",
    "IdmParams",
    "RolloutResult",
    "SimulationOptions",
    "CalibrationResult",
    "FitNoiseEstimate",
    "Pooling",
    "SearchSpace",
    "TrialRecord",
    "BoostModel",
    "FeatureVector",
    "RegressionTree",
    "TrainingSample",
    "GroundTruthLabel",
    "LeaderProfileKind",
    "PopulationSpec",
    "ConsistencyReport",
    "DiversityReport",
    "ParamDistributionReport",
    "ThresholdMode",
]
