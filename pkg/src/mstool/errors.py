"""Shared exception types."""


class MstoolError(Exception):
    """Base class for all toolkit errors."""


class ValidationError(MstoolError, ValueError):
    """An input violates a documented precondition or invariant."""


class DegenerateInputError(MstoolError, ValueError):
    """Input is structurally valid but mathematically degenerate
    (zero variance, all-zero denominator, empty split side, ...)."""


class SchemaError(ValidationError):
    """Two tables or files that must share a schema do not."""
