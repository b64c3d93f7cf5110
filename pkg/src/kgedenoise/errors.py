"""Exception hierarchy shared across the package.

The CLI maps these onto process exit codes: usage errors exit 1, data
errors exit 2, numeric failures exit 3.
"""


class KgeDenoiseError(Exception):
    """Base class for all package-specific errors."""


class UsageError(KgeDenoiseError):
    """Bad command-line usage or invalid argument combination."""


class DataError(KgeDenoiseError):
    """Malformed input files or out-of-contract argument values."""


class NumericError(KgeDenoiseError):
    """Non-finite values encountered during optimization."""
