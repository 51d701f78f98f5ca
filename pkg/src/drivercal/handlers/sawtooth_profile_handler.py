import numpy as np

from drivercal.handlers.base_profile_handler import BaseProfileHandler
from drivercal.models.synth_models import LeaderProfileKind, LeaderProfileRequest

# Share of each period spent accelerating; the rest is braking
RISE_FRACTION = 0.6


class SawtoothProfileHandler(BaseProfileHandler):
    """Periodic linear acceleration from low_speed to cruise_speed, then braking.

    The series repeats exactly every period_frames frames.
    """

    kind = LeaderProfileKind.SAWTOOTH.value

    def build_series(self, request: LeaderProfileRequest) -> np.ndarray:
        period = request.period_frames
        phase = (np.arange(request.frames) % period) / period
        low, high = request.low_speed, request.cruise_speed
        rising = low + (high - low) * phase / RISE_FRACTION
        falling = high - (high - low) * (phase - RISE_FRACTION) / (1.0 - RISE_FRACTION)
        return np.where(phase < RISE_FRACTION, rising, falling)
