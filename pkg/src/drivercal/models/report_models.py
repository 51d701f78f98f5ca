"""
Analysis report models: driver diversity, IDM parameter distribution and
the trajectory-half consistency experiment.
"""

from enum import Enum
from typing import Dict, List, Optional, Tuple

from pydantic import BaseModel, Field


class ThresholdMode(str, Enum):
    """How the acceleration threshold is applied to velocity changes"""

    PER_FRAME = "per_frame"  # consecutive frames
    PER_SECOND = "per_second"  # 1 s window


class Histogram(BaseModel):
    bin_edges: List[float]
    counts: List[int]
    peaks: List[int] = Field(default_factory=list)

    @property
    def total(self) -> int:
        return sum(self.counts)


class MetricSummary(BaseModel):
    """Per-driver values of one diversity metric plus its histogram"""

    name: str
    unit: str
    values: Dict[int, float] = Field(default_factory=dict)
    histogram: Histogram
    total_drivers: int
    excluded: int

    @property
    def inclusion_fraction(self) -> float:
        if self.total_drivers == 0:
            return 0.0
        return len(self.values) / self.total_drivers


class DiversityReport(BaseModel):
    mode: ThresholdMode
    accel_threshold: float
    headway_cap: float
    metrics: Dict[str, MetricSummary]
    alternate_mode_inclusion: Dict[str, float] = Field(default_factory=dict)
    multimodal: Dict[str, bool] = Field(default_factory=dict)


class ParameterBand(BaseModel):
    """Per-driver values of one parameter against the shared-fit noise band"""

    name: str
    values: Dict[int, float]
    shared_value: float
    noise_std: float = Field(..., ge=0)
    band: Tuple[float, float]
    in_band_fraction: float = Field(..., ge=0, le=1)
    diverse: bool


class ParamDistributionReport(BaseModel):
    parameters: Dict[str, ParameterBand]
    expected_fraction: float = 0.95

    @property
    def diverse_parameters(self) -> List[str]:
        return [name for name, band in self.parameters.items() if band.diverse]


class DistanceStats(BaseModel):
    mean: float
    standard_error: float = Field(..., ge=0)
    n: int = Field(..., ge=0)
    mean_normalized: float = 0.0
    distances: List[float] = Field(default_factory=list)


class SignificanceTest(BaseModel):
    test: str = "welch"
    alternative: str
    statistic: float
    p_value: float
    bucket: str


class BucketResult(BaseModel):
    label: str
    min_frames: int
    max_frames: int
    n_drivers: int
    refit_noise: DistanceStats
    same_driver: DistanceStats
    cross_driver: DistanceStats


class ConsistencyReport(BaseModel):
    buckets: List[BucketResult] = Field(default_factory=list)
    omitted_buckets: List[str] = Field(default_factory=list)
    significance: Optional[SignificanceTest] = None
