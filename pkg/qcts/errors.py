"""
Exception hierarchy for the trapping-set toolkit.

Each class carries the CLI exit code it maps to.
"""


class QctsError(Exception):
    """Base class for toolkit errors."""
    exit_code = 3


class UsageError(QctsError, ValueError):
    """Bad flags or arguments (exit code 1)."""
    exit_code = 1


class SizeCapError(UsageError):
    """A requested computation exceeds a documented size cap."""


class IntegrityError(QctsError, ValueError):
    """Malformed, inconsistent or mismatched input data (exit code 2)."""
    exit_code = 2


class RuntimeFailure(QctsError, RuntimeError):
    """A computation could not produce a valid result (exit code 3)."""
    exit_code = 3
