"""
Boosted regression-tree models for the one-step velocity-change baseline.
"""

from typing import List

from pydantic import BaseModel, ConfigDict, Field, model_validator

FEATURE_NAMES = ("velocity", "gap_m", "gap_s", "delta_v")


class FeatureVector(BaseModel):
    """Instantaneous car-following features of one frame.

    gap_s uses a 0.1 m/s floor on the velocity so standstill frames stay finite.
    """

    model_config = ConfigDict(frozen=True)

    velocity: float = Field(..., ge=0)
    gap_m: float = Field(..., gt=0)
    gap_s: float = Field(..., ge=0)
    delta_v: float

    def as_list(self) -> List[float]:
        return [self.velocity, self.gap_m, self.gap_s, self.delta_v]


class TrainingSample(BaseModel):
    features: FeatureVector
    target: float


class RegressionTree(BaseModel):
    """Depth-limited binary tree stored as parallel node arrays.

    Internal nodes have feature >= 0 and route x[feature] <= threshold left
    (features compared at float32 precision);
    leaves have feature == -1 and carry value.
    """

    feature: List[int]
    threshold: List[float]
    left: List[int]
    right: List[int]
    value: List[float]

    @model_validator(mode="after")
    def _check_arrays(self) -> "RegressionTree":
        n = len(self.feature)
        if not n or any(
            len(arr) != n for arr in (self.threshold, self.left, self.right, self.value)
        ):
            raise ValueError("tree node arrays must be non-empty and equally long")
        return self

    def predict_one(self, x: List[float]) -> float:
        node = 0
        while self.feature[node] >= 0:
            if x[self.feature[node]] <= self.threshold[node]:
                node = self.left[node]
            else:
                node = self.right[node]
        return self.value[node]


class BoostModel(BaseModel):
    """prediction = base_prediction + learning_rate * sum(tree outputs)"""

    base_prediction: float
    learning_rate: float = Field(..., gt=0)
    max_depth: int = Field(..., ge=1)
    trees: List[RegressionTree] = Field(default_factory=list)
    loss_history: List[float] = Field(default_factory=list)

    @property
    def rounds(self) -> int:
        return len(self.trees)
