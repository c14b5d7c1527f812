"""Exception hierarchy shared by every module.

The CLI maps ``DataError`` to exit code 2 and ``EstimationError`` to exit code 3.
"""


class DistSynthError(Exception):
    pass


class DataError(DistSynthError, ValueError):
    """Malformed or inconsistent input data."""


class SchemaError(DataError):
    """A required column is absent from the input header."""


class EstimationError(DistSynthError, RuntimeError):
    """A fit, solve or resampling step could not produce a valid result."""
