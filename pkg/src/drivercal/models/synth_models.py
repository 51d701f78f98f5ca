"""
Synthetic population models.

A population is a finite mixture of IDM archetypes; each generated driver
draws one archetype by weight and follows a leader profile with Gaussian
acceleration noise.
"""

import math
from enum import Enum
from typing import Dict, List, Optional

from pydantic import BaseModel, Field, model_validator

from drivercal.models.idm_models import IdmParams


class LeaderProfileKind(str, Enum):
    CONSTANT = "constant"
    STOP_AND_GO = "stop_and_go"
    SAWTOOTH = "sawtooth"
    RECORDED = "recorded"


class Archetype(BaseModel):
    name: str
    params: IdmParams
    weight: float = Field(..., gt=0)


class LeaderProfileRequest(BaseModel):
    """Everything a profile handler needs to build one leader series."""

    kind: str
    frames: int = Field(..., ge=1)
    seed: int = 0
    dt: float = Field(default=0.1, gt=0)
    cruise_speed: float = Field(default=14.0, ge=0)
    low_speed: float = Field(default=0.0, ge=0)
    period_frames: int = Field(default=200, ge=2)
    recorded: Optional[List[float]] = None


class PopulationSpec(BaseModel):
    """Ground-truth mixture p(psi) plus the driving context it is rolled out in."""

    archetypes: List[Archetype]
    action_noise_std: float = Field(default=0.3, ge=0, description="m/s^2")
    leader_profile: LeaderProfileKind = LeaderProfileKind.STOP_AND_GO
    n_drivers: int = Field(..., ge=1)
    frames_per_driver: int = Field(..., ge=2)
    seed: int = 0
    cruise_speed: float = Field(default=14.0, ge=0)
    low_speed: float = Field(default=0.0, ge=0)
    period_frames: int = Field(default=200, ge=2)
    recorded_leader: Optional[List[float]] = None
    resample_between_halves: bool = False
    max_regenerations: int = Field(default=100, ge=1)

    @model_validator(mode="after")
    def _check_weights(self) -> "PopulationSpec":
        if not self.archetypes:
            raise ValueError("population needs at least one archetype")
        total = sum(archetype.weight for archetype in self.archetypes)
        if not math.isclose(total, 1.0, rel_tol=1e-9, abs_tol=1e-9):
            raise ValueError(f"archetype weights must sum to 1, got {total}")
        return self


class DriverLabel(BaseModel):
    archetype_index: int
    archetype_name: str
    params: IdmParams
    second_half_archetype_index: Optional[int] = None
    second_half_params: Optional[IdmParams] = None


class GroundTruthLabel(BaseModel):
    """driver_id -> generating archetype and exact parameters"""

    drivers: Dict[int, DriverLabel] = Field(default_factory=dict)
