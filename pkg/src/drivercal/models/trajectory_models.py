"""
Trajectory and episode models.

Frames are the normalized (SI) rows of a trajectory dataset; episodes are the
contiguous ego-leader car-following segments reconstructed from them.
"""

from enum import Enum
from typing import Dict, List, Optional

from pydantic import BaseModel, ConfigDict, Field, model_validator

EPISODE_FORMAT_VERSION = 1
FRAME_DT = 0.1


class UnitSystem(str, Enum):
    """Length unit of a raw dataset"""

    FEET = "feet"
    METERS = "meters"


class VehicleClass(str, Enum):
    """Vehicle class as coded by NGSIM (1, 2, 3)"""

    MOTORCYCLE = "motorcycle"
    AUTO = "auto"
    TRUCK = "truck"


class AnomalyKind(str, Enum):
    """Reasons an episode was ended, truncated or dropped"""

    MISSING_LEADER = "missing_leader"
    NONPOSITIVE_GAP = "nonpositive_gap"
    FRAME_GAP = "frame_gap"
    TOO_SHORT = "too_short"


class TrajectoryFrame(BaseModel):
    """One 100 ms observation of one vehicle, in SI units."""

    model_config = ConfigDict(frozen=True)

    vehicle_id: int
    frame_index: int
    local_x: float
    local_y: float
    velocity: float = Field(..., ge=0, description="m/s")
    acceleration: float = Field(default=0.0, description="m/s^2, as recorded")
    lane_id: int
    preceding_id: int = Field(default=0, description="0 = no leader")
    following_id: int = Field(default=0, description="0 = no follower")
    vehicle_length: float = Field(..., gt=0, description="meters")
    vehicle_class: VehicleClass = VehicleClass.AUTO


class FollowEpisode(BaseModel):
    """A contiguous ego-leader car-following segment.

    All series share one length; gap is bumper-to-bumper (leader rear minus
    ego front) and strictly positive at every frame.
    """

    model_config = ConfigDict(frozen=True)

    episode_id: str
    driver_id: int
    leader_id: int = 0
    lane_id: int
    start_frame: int = 0
    dt: float = Field(default=FRAME_DT, gt=0)
    ego_velocity: List[float]
    leader_velocity: List[float]
    gap: List[float]
    anomalies: List[AnomalyKind] = Field(default_factory=list)

    @model_validator(mode="after")
    def _check_series(self) -> "FollowEpisode":
        n = len(self.ego_velocity)
        if n < 2:
            raise ValueError(f"episode {self.episode_id} needs at least 2 frames")
        if len(self.leader_velocity) != n or len(self.gap) != n:
            raise ValueError(f"episode {self.episode_id} has unequal series lengths")
        if min(self.gap) <= 0:
            raise ValueError(f"episode {self.episode_id} has a non-positive gap")
        return self

    @property
    def length(self) -> int:
        return len(self.ego_velocity)


class DatasetSummary(BaseModel):
    """Counts describing an episode set"""

    dataset_name: str = ""
    episode_count: int = Field(default=0, ge=0)
    driver_count: int = Field(default=0, ge=0)
    total_frames: int = Field(default=0, ge=0)
    anomaly_counts: Dict[str, int] = Field(default_factory=dict)


class EpisodeFile(BaseModel):
    """On-disk episode container shared by ingestion and synthesis."""

    format_version: int = EPISODE_FORMAT_VERSION
    dataset_name: str = ""
    episodes: List[FollowEpisode] = Field(default_factory=list)


REQUIRED_COLUMNS = (
    "vehicle_id",
    "frame_index",
    "local_x",
    "local_y",
    "velocity",
    "lane_id",
    "preceding_id",
    "vehicle_length",
)
OPTIONAL_COLUMNS = ("acceleration", "following_id", "vehicle_class")


class ColumnSchema(BaseModel):
    """Maps frame fields to the header names of a CSV export.

    Required fields must be mapped; optional ones fall back to defaults.
    """

    vehicle_id: str = "Vehicle_ID"
    frame_index: str = "Frame_ID"
    local_x: str = "Local_X"
    local_y: str = "Local_Y"
    velocity: str = "v_Vel"
    lane_id: str = "Lane_ID"
    preceding_id: str = "Preceding"
    vehicle_length: str = "v_Length"
    acceleration: Optional[str] = "v_Acc"
    following_id: Optional[str] = "Following"
    vehicle_class: Optional[str] = "v_Class"
