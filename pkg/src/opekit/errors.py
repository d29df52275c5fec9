"""Exception types shared across the toolkit.

The CLI maps these to exit code 2 (data/estimation errors); argparse usage
problems map to exit code 1.
"""


class OpekitError(Exception):
    """Base class for all toolkit errors."""


class InputError(OpekitError):
    """Invalid argument, shape, or dimension."""


class ConfigError(OpekitError):
    """Invalid or inconsistent configuration."""


class LogFormatError(OpekitError):
    """Malformed log file or row; carries the offending line when known."""

    def __init__(self, message: str, line: int | None = None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class SupportViolationError(OpekitError):
    """Logging policy has zero probability on an action the target policy can take."""

    def __init__(self, message: str, record_index: int | None = None):
        if record_index is not None:
            message = f"record {record_index}: {message}"
        super().__init__(message)
        self.record_index = record_index


class RecordRejected(OpekitError):
    """A record cannot be used under the current propensity mode (counted, not fatal)."""


class EstimationError(OpekitError):
    """Estimate is undefined for the given data (e.g. no usable records)."""


class UnsupportedModeError(OpekitError):
    """Requested mode is not available for the given inputs."""
