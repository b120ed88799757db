"""Exception taxonomy and report records shared across modules."""

from __future__ import annotations

from dataclasses import dataclass


class ParaschedError(Exception):
    """Base class for all package errors."""


class ScenarioParseError(ParaschedError):
    """Scenario/solution file is missing, malformed, or lacks a required section."""


class ValidationError(ParaschedError):
    """Input failed validation; carries the offending report."""

    def __init__(self, message: str, issues=()):
        super().__init__(message)
        self.issues = list(issues)


class GraphCycleError(ParaschedError):
    """A computation graph contains a dependency cycle."""

    def __init__(self, members):
        super().__init__(f"dependency cycle through: {', '.join(members)}")
        self.members = tuple(members)


class EventApplicationError(ParaschedError):
    """A topology event referenced an entity missing at application time."""


class RewriteError(ParaschedError):
    """A graph rewrite precondition was violated."""


class PlacementError(ParaschedError):
    """An assignment references a device/link that cannot host the work."""


class InfeasibleError(ParaschedError):
    """No constraint-respecting plan exists for the given inputs."""


class MemoryInfeasibleError(InfeasibleError):
    """Static memory demand exceeds a device capacity."""

    def __init__(self, device_id: str, overflow_bytes: int):
        super().__init__(
            f"device {device_id} over memory capacity by {overflow_bytes} bytes"
        )
        self.device_id = device_id
        self.overflow_bytes = overflow_bytes


class SizeLimitError(ParaschedError):
    """Instance exceeds a hard enumeration guard."""


class NodeFailureAbort(ParaschedError):
    """A node_fail event hit a device with outstanding work.

    Carries the partial timeline so replanning can resume from it.
    """

    def __init__(self, message: str, event, schedule, timeline):
        super().__init__(message)
        self.event = event
        self.schedule = schedule
        self.timeline = timeline


@dataclass(frozen=True)
class Issue:
    """One validation finding. Report-style: callers decide severity."""

    code: str
    subject: str
    message: str

    def __str__(self) -> str:
        return f"[{self.code}] {self.subject}: {self.message}"
