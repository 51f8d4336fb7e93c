"""Exception hierarchy for wrsearch.

Every error carries the process exit code the CLI reports for it.
"""


class WRSearchError(Exception):
    """Base class for all wrsearch errors."""

    exit_code = 1


class SpaceConfigurationError(WRSearchError, ValueError):
    """A dimension or search space violates its invariants."""

    exit_code = 2


class ConfigError(WRSearchError, ValueError):
    """An experiment configuration is invalid."""

    exit_code = 2


class InputDataError(WRSearchError, ValueError):
    """A trial log or command-line input cannot be used."""

    exit_code = 2


class OutputError(WRSearchError, OSError):
    """Campaign artifacts cannot be written."""

    exit_code = 3


class ConstantObjectiveError(WRSearchError):
    """The objective values carry no variance to decompose."""

    exit_code = 4


class ScheduleError(WRSearchError, ValueError):
    """Weights cannot be turned into a change schedule."""

    exit_code = 4


class TheoryDomainError(WRSearchError, ValueError):
    """Probability formulas were given a non-finite domain."""

    exit_code = 2


class EngineError(WRSearchError):
    """A step was requested from a history that cannot support it."""


class ObjectiveError(WRSearchError):
    """A single objective evaluation failed.

    The engine records the trial as failed and keeps going.
    """


class ObjectiveTimeoutError(ObjectiveError):
    """An external objective did not answer in time."""
