"""Exception types shared across the package.

All of these derive from ValueError (or ArithmeticError for NumericError),
so callers that do not care about the fine-grained category can catch the
built-in types.
"""


class SpdKdeError(Exception):
    """Base class for all package-specific errors."""


class DimensionError(SpdKdeError, ValueError):
    """Shapes or dimensions of inputs are inconsistent."""


class DomainError(SpdKdeError, ValueError):
    """A parameter lies outside its mathematical domain (e.g. not SPD)."""


class NumericError(SpdKdeError, ArithmeticError):
    """A computation produced non-finite or unusable values."""


class DataError(SpdKdeError, ValueError):
    """An input file or record could not be parsed or validated."""


class ConfigError(SpdKdeError, ValueError):
    """A configuration object is internally inconsistent."""
