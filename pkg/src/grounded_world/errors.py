"""Exception taxonomy shared across the engine.

Every error the library raises deliberately derives from GroundedWorldError so
callers (and the CLI exit-code mapping) can distinguish engine failures from
plain bugs.
"""

from __future__ import annotations


class GroundedWorldError(Exception):
    """Base class for all engine errors."""


class InputError(GroundedWorldError, ValueError):
    """A caller violated a documented precondition (maps to CLI exit 2)."""


class InsufficientDepth(GroundedWorldError):
    """Too few valid depth samples survived to ground a detection."""


class NoPlaneFound(GroundedWorldError):
    """RANSAC found no near-horizontal support plane with enough inliers."""


class ProposerUnavailable(GroundedWorldError):
    """A semantic tool (proposer/detector) failed or timed out."""

    def __init__(self, message: str, elapsed: float | None = None):
        super().__init__(message)
        self.elapsed = elapsed


class ProtocolError(GroundedWorldError):
    """A remote tool answered with a malformed or mistyped payload."""


class QueryParseError(GroundedWorldError):
    """Query text rejected by the grammar; carries the character offset."""

    def __init__(self, message: str, position: int):
        super().__init__(f"{message} (at position {position})")
        self.position = position


class QueryFailed(GroundedWorldError):
    """A query's perception pass failed; carries the pipeline stage name."""

    def __init__(self, message: str, stage: str):
        super().__init__(message)
        self.stage = stage


class SceneFormatError(GroundedWorldError):
    """Scene or report file does not conform to the JSON schema."""


class GenerationFailed(GroundedWorldError):
    """Scene generation could not satisfy placement constraints."""
