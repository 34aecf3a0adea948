"""Exception hierarchy. Each class maps to one CLI exit code."""


class HemoGPError(Exception):
    """Base class for all package errors."""

    exit_code = 1


class ConfigError(HemoGPError):
    """Bad user input: config files, CSV layouts, CLI arguments, containers."""

    exit_code = 2


class FileFormatError(ConfigError):
    """Unreadable or corrupt on-disk artifact (container, CSV, manifest)."""


class DomainError(ConfigError):
    """Query outside the kernel's space-time domain."""


class NumericalError(HemoGPError):
    """Solver breakdown: CFL violation, blow-up, failed Newton iteration."""

    exit_code = 3


class ConvergenceError(NumericalError):
    """An iteration (Newton, periodicity loop) exhausted its budget."""


class SampleRejectedError(NumericalError):
    """A randomized draw produced a non-physical parameter value."""


class InvariantError(HemoGPError):
    """An internal consistency check failed; indicates a bug, not bad input."""

    exit_code = 4
