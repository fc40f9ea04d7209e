"""Shared exception types; CLI maps these onto exit codes."""


class ValidationError(ValueError):
    """Bad input, config or arguments (exit code 2)."""


class BackendError(RuntimeError):
    """A classifier or provider backend failed (exit code 3)."""


class TransportError(BackendError):
    """Network-level failure after exhausting retries."""
