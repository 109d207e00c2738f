"""Exception hierarchy for the Eiger-PORT+ simulator and checker."""

from typing import Any


class EigerPortError(Exception):
    """Base class for every error raised by this package."""


class ProtocolError(EigerPortError):
    """A component received a message or event its state does not allow."""


class UsageError(EigerPortError):
    """Invalid caller input or configuration."""


class MalformedHistoryError(EigerPortError):
    """A history log violates its schema or the history invariants."""


class ScriptError(EigerPortError):
    """A scripted schedule step is not enabled in the current state."""

    def __init__(self, step_index: int, step: Any, reason: str):
        super().__init__(f"script step {step_index} {step!r} is blocked: {reason}")
        self.step_index = step_index
        self.step = step
        self.reason = reason


class ExplorationLimitError(EigerPortError):
    """A bounded search exceeded its configured state cap."""

    def __init__(self, visited: int, cap: int):
        super().__init__(f"state cap exceeded: visited {visited} states (cap {cap})")
        self.visited = visited
        self.cap = cap


class DeadlockError(EigerPortError):
    """No deliverable events remain while transactions are still incomplete."""

    def __init__(self, message: str, dump: dict[str, Any]):
        super().__init__(message)
        self.dump = dump


class InvariantViolation(EigerPortError):
    """A runtime protocol invariant or NOC property does not hold."""

    def __init__(self, invariant: str, detail: str):
        super().__init__(f"{invariant}: {detail}")
        self.invariant = invariant
        self.detail = detail
