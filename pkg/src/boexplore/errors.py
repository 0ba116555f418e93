"""Exception hierarchy shared by all modules."""


class BOExploreError(Exception):
    """Base class for package errors."""


class InputError(BOExploreError, ValueError):
    """Rejected input: wrong shape, out of range, empty, ..."""


class ConfigError(BOExploreError, ValueError):
    """Unsupported or inconsistent configuration."""


class ModelFitError(BOExploreError, RuntimeError):
    """Kernel matrix could not be factorized even after jitter escalation."""


class NotFittedError(BOExploreError, RuntimeError):
    """A model was used before being fitted."""


class TraceParseError(BOExploreError, ValueError):
    """A trace file line could not be parsed."""

    def __init__(self, message, lineno=None):
        if lineno is not None:
            message = f"line {lineno}: {message}"
        super().__init__(message)
        self.lineno = lineno


class TraceFormatError(TraceParseError):
    """A trace file parsed but violates the schema (e.g. inconsistent dims)."""
