"""
Exception types raised by grpolab, and the exit codes the CLI maps them to.
"""

EXIT_OK = 0
EXIT_DOMAIN = 1
EXIT_USAGE = 2
EXIT_ENVIRONMENT = 3


class GrpoLabError(Exception):
    """Base class for every failure raised by this package."""
    exit_code = EXIT_DOMAIN


class InvalidGroupError(GrpoLabError, ValueError):
    """A rollout group is too small or internally inconsistent."""


class InvalidBatchError(GrpoLabError, ValueError):
    """A batch of rollout groups cannot be reduced to an objective."""


class InvalidInputError(GrpoLabError, ValueError):
    """An argument lies outside the domain of the operation."""


class NumericDomainError(GrpoLabError, ValueError):
    """A numeric input is NaN or infinite."""


class AbortStepError(GrpoLabError, FloatingPointError):
    """The optimizer refused to apply a non-finite gradient."""


class ExhaustedPoolError(GrpoLabError):
    """A task pool cannot supply the requested batch composition."""


class InvalidTemplateError(GrpoLabError, ValueError):
    """A prompt template lacks a required placeholder."""


class ConfigError(GrpoLabError, ValueError):
    """The configuration passed schema validation but is inconsistent."""
    exit_code = EXIT_USAGE


class ExecutorEnvironmentError(GrpoLabError, OSError):
    """The external program runner could not be started."""
    exit_code = EXIT_ENVIRONMENT


class UsageError(GrpoLabError):
    """Bad command-line arguments."""
    exit_code = EXIT_USAGE
