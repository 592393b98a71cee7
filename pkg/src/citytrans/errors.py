"""Exception hierarchy shared across the package.

Exit codes used by the CLI: 1 usage, 2 data, 3 numerical.
"""


class CityTransError(Exception):
    exit_code = 1


class UsageError(CityTransError):
    """Bad invocation: unknown method name, missing flag, bad mode."""

    exit_code = 1


class DataError(CityTransError):
    """Malformed or inconsistent input data or configuration."""

    exit_code = 2


class OutOfBoundsError(DataError):
    """Coordinate or place id outside the grid bounding box."""


class NumericalError(CityTransError):
    """Non-finite values or divergence during optimization."""

    exit_code = 3
