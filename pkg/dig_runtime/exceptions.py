"""
Runtime error hierarchy
"""
from typing import Optional


class DigError(Exception):
    """Base class for every error raised by the runtime"""
    pass


class ConfigError(DigError):
    """Invalid run configuration or policy spec"""
    pass


class DuplicateDeliveryError(DigError):
    """An event was inserted twice into the same buffer"""

    def __init__(self, event_id: str):
        super().__init__(f"Event {event_id} already present in buffer")
        self.event_id = event_id


class OverlappingActivationError(DigError):
    """An agent was activated while a previous activation was still open"""
    pass


class UnknownNodeError(DigError):
    """A record or query referenced an id the graph has never seen"""

    def __init__(self, node_id: str):
        super().__init__(f"Unknown node: {node_id}")
        self.node_id = node_id


class GraphInvariantError(DigError):
    """Bipartiteness, single generation edge or timestamp order violated"""
    pass


class DecisionError(DigError):
    """A policy returned an incomplete or malformed Decision"""
    pass


class TraceFormatError(DigError):
    """Malformed trace line"""

    def __init__(self, message: str, line_no: Optional[int] = None):
        prefix = f"line {line_no}: " if line_no is not None else ""
        super().__init__(f"{prefix}{message}")
        self.line_no = line_no


class UnknownFailureClassError(DigError):
    """Healer was handed a signal class it has no remedy for"""
    pass


class RunLimitExceeded(DigError):
    """max_ticks or max_wall_seconds reached before the run settled"""
    pass
