from abc import ABC, abstractmethod
from typing import List

import numpy as np

from drivercal.models.synth_models import LeaderProfileRequest


class BaseProfileHandler(ABC):
    """Base class for leader velocity profile handlers.

    Each handler is responsible for:
    1. Determining if it can build the requested profile kind
    2. Producing the leader velocity series (m/s, one entry per frame)
    """

    kind: str = ""

    def can_handle(self, request: LeaderProfileRequest) -> float:
        """Confidence between 0.0 (cannot build) and 1.0 (exact kind match)."""
        return 1.0 if request.kind == self.kind else 0.0

    def process(self, request: LeaderProfileRequest) -> List[float]:
        """Build the profile.

        Template method; subclasses implement build_series. The result is
        clamped at zero and checked for length.

        Raises:
            ValueError: If this handler cannot build the request
        """
        if self.can_handle(request) == 0.0:
            raise ValueError(
                f"Handler {self.__class__.__name__} cannot build profile '{request.kind}'"
            )

        series = np.maximum(0.0, np.asarray(self.build_series(request), dtype=float))
        if series.shape != (request.frames,):
            raise ValueError(
                f"{self.__class__.__name__} produced {series.shape[0]} frames, "
                f"expected {request.frames}"
            )
        return series.tolist()

    @abstractmethod
    def build_series(self, request: LeaderProfileRequest) -> np.ndarray:
        """Raw velocity series of request.frames entries."""
        pass
