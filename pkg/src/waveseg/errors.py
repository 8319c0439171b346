"""Exception taxonomy, mapped to CLI exit codes in ``waveseg.cli``."""


class WavesegError(Exception):
    """Base class for all package errors."""


class ConfigError(WavesegError):
    """Invalid configuration value or combination (exit code 1)."""


class ValidationError(WavesegError):
    """Data violates a declared invariant (exit code 1)."""


class ShapeError(ValidationError):
    """Array shapes incompatible with the requested operation."""


class FormatError(WavesegError):
    """On-disk manifest or blob malformed (exit code 2)."""


class DataLoadError(WavesegError):
    """Referenced file missing or unreadable (exit code 2)."""


class NumericError(WavesegError):
    """Non-finite value where a finite one is required (exit code 3)."""


class UndefinedMetricError(WavesegError):
    """Metric has no defined value for the given inputs (e.g. empty region)."""


class ContractViolation(WavesegError):
    """Internal invariant broken between cooperating components."""
