"""
errors.py

Exception hierarchy for the event verification toolkit. Every error that can reach
the command line carries the exit code the CLI reports for it.

Classes:
- SpoofGuardError: Base class, holds a message and an exit code.
- ConfigError, CorpusError, UntrainableEventError, NoInformativeSensorsError,
  BundleError, CoverageError: Concrete failures mapped to the exit-code table.
"""

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_UNTRAINABLE = 3
EXIT_INCOMPATIBLE = 4
EXIT_COVERAGE = 5


class SpoofGuardError(Exception):
    """Base error; `exit_code` is what the CLI returns when this escapes a command."""

    exit_code = 1

    def __init__(self, message, *, exit_code=None):
        super().__init__(message)
        self.message = message
        if exit_code is not None:
            self.exit_code = exit_code


class ConfigError(SpoofGuardError):
    exit_code = EXIT_CONFIG


class CorpusError(SpoofGuardError):
    """Malformed, non-monotone or otherwise invalid corpus input."""

    exit_code = EXIT_CONFIG


class UntrainableEventError(SpoofGuardError):
    exit_code = EXIT_UNTRAINABLE


class NoInformativeSensorsError(UntrainableEventError):
    """No candidate sensor reaches the selection threshold."""


class BundleError(SpoofGuardError):
    exit_code = EXIT_INCOMPATIBLE


class CoverageError(SpoofGuardError):
    exit_code = EXIT_COVERAGE
