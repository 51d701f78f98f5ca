"""
Calibration models: search space, fit results, refit-noise estimates and
the per-driver MSE table.
"""

from enum import Enum
from typing import Dict, List, Optional, Tuple

from pydantic import BaseModel, Field, model_validator

from drivercal.models.idm_models import PARAM_NAMES, IdmParams


class Pooling(str, Enum):
    """How squared errors of several episodes are combined"""

    FRAMES = "frames"  # frame-weighted
    EPISODES = "episodes"  # mean of per-episode MSEs


class SearchSpace(BaseModel):
    """Closed per-parameter intervals plus optionally pinned parameters."""

    v0: Tuple[float, float] = (1.0, 60.0)
    s0: Tuple[float, float] = (0.0, 15.0)
    T: Tuple[float, float] = (0.0, 5.0)
    a: Tuple[float, float] = (0.05, 10.0)
    b: Tuple[float, float] = (0.05, 10.0)
    delta: float = Field(default=4.0, gt=0)
    fixed: Dict[str, float] = Field(default_factory=dict)

    @model_validator(mode="after")
    def _check_bounds(self) -> "SearchSpace":
        for name in PARAM_NAMES:
            lower, upper = getattr(self, name)
            if not lower < upper:
                raise ValueError(f"{name}: lower bound must be below upper bound")
        unknown = set(self.fixed) - set(PARAM_NAMES)
        if unknown:
            raise ValueError(f"cannot pin unknown parameters: {sorted(unknown)}")
        if self.v0[0] <= 0 or self.a[0] <= 0 or self.b[0] <= 0:
            raise ValueError("v0, a and b bounds must be strictly positive")
        if self.s0[0] < 0 or self.T[0] < 0:
            raise ValueError("s0 and T bounds must be non-negative")
        return self

    @property
    def free_names(self) -> List[str]:
        return [name for name in PARAM_NAMES if name not in self.fixed]

    def bounds(self, name: str) -> Tuple[float, float]:
        return getattr(self, name)

    def width(self, name: str) -> float:
        lower, upper = self.bounds(name)
        return upper - lower

    def contains(self, params: IdmParams) -> bool:
        for name in PARAM_NAMES:
            value = getattr(params, name)
            if name in self.fixed:
                if value != self.fixed[name]:
                    return False
                continue
            lower, upper = self.bounds(name)
            if not lower <= value <= upper:
                return False
        return True


class TrialRecord(BaseModel):
    params: IdmParams
    objective: float


class CalibrationResult(BaseModel):
    """Best parameters of one black-box search and how they were found."""

    params: IdmParams
    objective: float
    n_trials: int = Field(..., ge=1)
    seed: int
    driver_id: Optional[int] = None
    trial_log: List[TrialRecord] = Field(default_factory=list)


class FitNoiseEstimate(BaseModel):
    """Spread of the fitted parameters across repeated fits of the same data."""

    param_std: Dict[str, float]
    mean_pairwise_distance: float = Field(..., ge=0)
    n_repeats: int = Field(..., ge=2)

    @model_validator(mode="after")
    def _check_non_negative(self) -> "FitNoiseEstimate":
        if any(value < 0 for value in self.param_std.values()):
            raise ValueError("parameter standard deviations must be non-negative")
        return self


class MseRow(BaseModel):
    """One row of the MSE summary table"""

    dataset: str
    mode: str
    mse_mean: float
    mse_se: float
    mse_sd: float
    n_drivers: int
