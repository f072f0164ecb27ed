"""Exception types shared across the package."""


class AdnotateError(Exception):
    """Base class for all package errors."""


class ParseError(AdnotateError):
    """A record or file could not be parsed. Carries the offending line number."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class ConflictError(AdnotateError):
    """An entity with the same identity already exists."""


class NotFoundError(AdnotateError):
    """A referenced entity does not exist."""


class ValidationError(AdnotateError):
    """Input violates a documented precondition."""


class CapacityError(AdnotateError):
    """Not enough source material to satisfy a sampling request."""


class UndefinedMetricError(AdnotateError):
    """A metric has no defined value on the given input (empty denominator)."""


class CredentialError(AdnotateError):
    """The completion endpoint rejected the configured credential."""


class TransportError(AdnotateError):
    """The completion endpoint stayed unreachable after retries."""


class FormatError(AdnotateError):
    """A model response does not follow the expected explanation format."""


class ExplanationUnavailableError(AdnotateError):
    """Neither the remote endpoint nor a local fallback model could produce an explanation."""
