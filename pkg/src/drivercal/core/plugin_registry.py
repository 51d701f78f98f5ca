from typing import Dict, List, Optional

from drivercal.handlers.base_profile_handler import BaseProfileHandler
from drivercal.models.synth_models import LeaderProfileRequest


class PluginRegistry:
    """Central registry for leader-profile handlers.

    Routes a LeaderProfileRequest to the handler reporting the highest
    confidence, trying handlers in priority order.
    """

    def __init__(self):
        # Dict of priority -> list of handlers
        self._handlers: Dict[int, List[BaseProfileHandler]] = {}

    def register_handler(self, handler: BaseProfileHandler, priority: int = 100) -> None:
        """Add a profile handler; lower priority numbers are consulted first.

        Raises:
            ValueError: If handler is not a BaseProfileHandler instance
        """
        if not isinstance(handler, BaseProfileHandler):
            raise ValueError("Handler must be an instance of BaseProfileHandler")
        self._handlers.setdefault(priority, []).append(handler)

    def get_handler(self, request: LeaderProfileRequest) -> Optional[BaseProfileHandler]:
        """Get the most appropriate handler for a request.

        A handler with confidence 1.0 wins immediately.

        Returns:
            BaseProfileHandler if found, None if no handler can build the profile
        """
        best_handler = None
        best_confidence = 0.0

        for priority in sorted(self._handlers.keys()):
            for handler in self._handlers[priority]:
                confidence = handler.can_handle(request)
                if confidence == 1.0:
                    return handler
                if confidence > best_confidence:
                    best_confidence = confidence
                    best_handler = handler

        return best_handler

    def get_handlers_by_priority(self) -> List[BaseProfileHandler]:
        """All handlers, highest priority first."""
        handlers = []
        for priority in sorted(self._handlers.keys()):
            handlers.extend(self._handlers[priority])
        return handlers
