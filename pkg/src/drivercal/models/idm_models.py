"""
Intelligent Driver Model parameter and state models.
"""

from typing import List, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field

PARAM_NAMES: Tuple[str, ...] = ("v0", "s0", "T", "a", "b")


class IdmParams(BaseModel):
    """The five free IDM parameters plus the fixed exponent."""

    model_config = ConfigDict(frozen=True)

    v0: float = Field(..., gt=0, description="Desired speed (m/s)")
    s0: float = Field(..., ge=0, description="Minimum spacing (m)")
    T: float = Field(..., ge=0, description="Desired time headway (s)")
    a: float = Field(..., gt=0, description="Maximum acceleration (m/s^2)")
    b: float = Field(..., gt=0, description="Comfortable deceleration (m/s^2)")
    delta: float = Field(default=4.0, gt=0, description="Acceleration exponent")

    def as_vector(self) -> List[float]:
        """Free parameters in (v0, s0, T, a, b) order."""
        return [self.v0, self.s0, self.T, self.a, self.b]

    @classmethod
    def from_vector(cls, values: List[float], delta: float = 4.0) -> "IdmParams":
        return cls(**dict(zip(PARAM_NAMES, (float(v) for v in values))), delta=delta)


class SimulationOptions(BaseModel):
    """Integration switches shared by calibration, synthesis and rollouts.

    semi_implicit updates the gap from the post-step ego velocity;
    clamp_desired_gap floors the dynamic desired gap s* at zero.
    """

    model_config = ConfigDict(frozen=True)

    dt: float = Field(default=0.1, gt=0)
    semi_implicit: bool = True
    clamp_desired_gap: bool = True


class EgoState(BaseModel):
    model_config = ConfigDict(frozen=True)

    velocity: float = Field(..., ge=0)
    gap: float


class RolloutResult(BaseModel):
    """Closed-loop ego trajectory against a leader profile.

    After a collision every entry is frozen at the collision values.
    """

    velocities: List[float]
    gaps: List[float]
    collided: bool = False
    collision_frame: Optional[int] = None
