import numpy as np

from drivercal.handlers.base_profile_handler import BaseProfileHandler
from drivercal.models.synth_models import LeaderProfileKind, LeaderProfileRequest


class ConstantProfileHandler(BaseProfileHandler):
    """Leader cruising at request.cruise_speed for the whole horizon."""

    kind = LeaderProfileKind.CONSTANT.value

    def build_series(self, request: LeaderProfileRequest) -> np.ndarray:
        return np.full(request.frames, float(request.cruise_speed))
