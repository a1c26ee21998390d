"""Exception hierarchy shared across the package.

The CLI maps these onto exit codes: ConfigError -> 1, DataError -> 2,
NumericError -> 3.
"""


class XsellError(Exception):
    """Base class for all errors raised by this package."""


class ConfigError(XsellError):
    """Invalid configuration: bad parameter values, malformed config files."""


class DataError(XsellError):
    """Invalid or degenerate input data: missing columns, empty populations,
    single-class labels, missing stage artifacts."""


class NumericError(XsellError):
    """Numeric procedure failed: calibration did not converge, degenerate
    statistic, exhausted resampling retries."""
