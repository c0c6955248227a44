"""Exception types shared across the package."""


class MisoBCError(Exception):
    """Base class for all package errors."""


class ConfigurationError(MisoBCError, ValueError):
    """Invalid dimensions, parameters, or strategy configuration."""


class UsageError(MisoBCError, ValueError):
    """A valid object used in a way its contract does not allow."""


class InvariantViolation(MisoBCError, RuntimeError):
    """An internal invariant failed; results cannot be trusted."""


class SolverError(MisoBCError, RuntimeError):
    """The optimizer could not produce a usable point."""

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}
