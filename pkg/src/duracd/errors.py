"""Exception hierarchy shared across the package.

The CLI maps these onto exit codes: usage problems -> 1, data problems -> 2,
numerical failures -> 3.
"""


class DuracdError(Exception):
    """Base class for all package errors."""


class ParseError(DuracdError):
    """Malformed or inconsistent input text (carries a line number when known)."""


class DataError(DuracdError):
    """Inputs violate a precondition: too short, empty split, constant series, ..."""


class NumericError(DuracdError):
    """A computation produced non-finite or otherwise invalid values."""
