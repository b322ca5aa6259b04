"""Exception types shared across the package."""

from __future__ import annotations


class VidcurateError(Exception):
    """Base class for all package errors."""


class IllegalTransition(VidcurateError):
    """A video stage transition that is not an edge of the lifecycle DAG."""

    def __init__(self, from_stage, to_stage):
        self.from_stage = from_stage
        self.to_stage = to_stage
        super().__init__(f"illegal stage transition: {from_stage} -> {to_stage}")


class MissingDelimiters(VidcurateError):
    """Response contains no well-formed delimiter span."""


class EmptyPayload(VidcurateError):
    """Delimiter span present but yields no usable payload."""


class MalformedVerdict(VidcurateError):
    """Descriptor response lacks a parseable Yes/No field structure."""


class BackendUnavailable(VidcurateError):
    """The model backend could not be reached or refused the call."""


class ProtocolError(VidcurateError):
    """Backend replies stayed malformed after all retries."""


class AdapterUnavailable(VidcurateError):
    """A source or grounding adapter could not be reached."""


class MissingAsset(VidcurateError):
    """Video has neither an asset reference nor a cached description."""


class PreconditionError(VidcurateError):
    """An operation was called outside its stated precondition."""


class ValidationFailed(VidcurateError):
    """A round record violates its invariants."""

    def __init__(self, violations):
        self.violations = list(violations)
        super().__init__(f"round validation failed: {', '.join(self.violations)}")


class StaleRound(VidcurateError):
    """Submitted feedback does not match the currently issued round."""


class UnknownBatch(VidcurateError):
    """Double-check feedback references items that were never issued."""


class PoolExhausted(VidcurateError):
    """No unreviewed candidates remain in the session pool."""


class PhaseError(VidcurateError):
    """Operation invoked in a session phase that does not allow it."""


class SchemaError(VidcurateError):
    """A benchmark or manifest file does not match its schema."""

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
