# File: utils/errors.py
"""
Exception hierarchy shared by every package. Each class carries the process
exit code main.py uses when the error reaches the command line.
"""


class TractographyError(Exception):
    exit_code = 2


class InvalidArgumentError(TractographyError, ValueError):
    pass


class ConfigError(TractographyError):
    pass


class UsageError(TractographyError):
    pass


class NiftiFormatError(TractographyError):
    pass


class UnsupportedDatatypeError(NiftiFormatError):
    pass


class NiftiIOError(TractographyError, OSError):
    pass


class TckFormatError(TractographyError):
    pass


class OutOfBoundsError(TractographyError):
    pass


class DegenerateStreamlineError(TractographyError):
    pass


class EmptyDatasetError(TractographyError):
    pass


class EmptyTractogramError(TractographyError):
    pass


class CheckpointError(TractographyError):
    pass


class CheckpointMismatchError(CheckpointError):
    pass


class NonFiniteError(TractographyError):
    """Raised when a loss, gradient or model output stops being finite."""
    exit_code = 3
