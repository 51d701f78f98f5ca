import numpy as np

from drivercal.handlers.base_profile_handler import BaseProfileHandler
from drivercal.models.synth_models import LeaderProfileKind, LeaderProfileRequest


class StopAndGoProfileHandler(BaseProfileHandler):
    """Smooth stop-and-go cycles between low_speed and cruise_speed.

    Each cycle holds the cruise speed, brakes along a half-cosine ramp, holds
    the low speed and accelerates back. Hold durations and the peak speed of
    every cycle are jittered from request.seed so successive cycles differ.
    """

    kind = LeaderProfileKind.STOP_AND_GO.value

    # Cycle layout as shares of period_frames
    HOLD_HIGH = 0.2
    RAMP_DOWN = 0.3
    HOLD_LOW = 0.2
    RAMP_UP = 0.3

    def build_series(self, request: LeaderProfileRequest) -> np.ndarray:
        rng = np.random.default_rng(request.seed)
        period = request.period_frames
        low = request.low_speed
        series = []
        level = request.cruise_speed
        while len(series) < request.frames:
            peak = low + (request.cruise_speed - low) * rng.uniform(0.8, 1.0)
            hold_high = max(1, round(period * self.HOLD_HIGH * rng.uniform(0.5, 1.5)))
            hold_low = max(1, round(period * self.HOLD_LOW * rng.uniform(0.5, 1.5)))
            ramp_down = max(2, round(period * self.RAMP_DOWN))
            ramp_up = max(2, round(period * self.RAMP_UP))

            series.extend(self._ramp(level, peak, ramp_up))
            series.extend([peak] * hold_high)
            series.extend(self._ramp(peak, low, ramp_down))
            series.extend([low] * hold_low)
            level = low
        return np.asarray(series[: request.frames])

    @staticmethod
    def _ramp(start: float, end: float, frames: int) -> np.ndarray:
        """Half-cosine transition, excluding the start value."""
        phase = np.arange(1, frames + 1) / frames
        return start + (end - start) * (1.0 - np.cos(np.pi * phase)) / 2.0
