from .base_profile_handler import BaseProfileHandler
from .constant_profile_handler import ConstantProfileHandler
from .recorded_profile_handler import RecordedProfileHandler
from .sawtooth_profile_handler import SawtoothProfileHandler
from .stop_and_go_profile_handler import StopAndGoProfileHandler

__all__ = [
    "BaseProfileHandler",
    "ConstantProfileHandler",
    "RecordedProfileHandler",
    "SawtoothProfileHandler",
    "StopAndGoProfileHandler",
]
