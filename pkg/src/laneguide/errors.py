"""Exception types shared across the toolkit."""
from __future__ import annotations


class LaneGuideError(Exception):
    """Base class for all toolkit errors."""


class DomainError(LaneGuideError):
    """An argument violates a documented precondition or invariant."""


class ParseError(LaneGuideError):
    """A serialized artifact is malformed.

    Carries the 1-based line number when the failure is line-local.
    """

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class EmptyMask(LaneGuideError):
    """An instance mask has no cell above the decoding threshold."""


class TooFewAnchors(LaneGuideError):
    """Decoding found fewer qualifying anchors than the configured minimum."""
