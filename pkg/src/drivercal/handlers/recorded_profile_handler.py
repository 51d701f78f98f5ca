import numpy as np

from drivercal.handlers.base_profile_handler import BaseProfileHandler
from drivercal.models.synth_models import LeaderProfileKind, LeaderProfileRequest


class RecordedProfileHandler(BaseProfileHandler):
    """Pass-through of a supplied leader series, truncated to the horizon."""

    kind = LeaderProfileKind.RECORDED.value

    def can_handle(self, request: LeaderProfileRequest) -> float:
        if request.kind != self.kind or request.recorded is None:
            return 0.0
        return 1.0

    def build_series(self, request: LeaderProfileRequest) -> np.ndarray:
        recorded = np.asarray(request.recorded, dtype=float)
        if len(recorded) < request.frames:
            raise ValueError(
                f"recorded leader has {len(recorded)} frames, {request.frames} requested"
            )
        if (recorded < 0).any():
            raise ValueError("recorded leader velocities must be non-negative")
        return recorded[: request.frames]
