"""Exception hierarchy shared by all modules.

The CLI prints the class name of whatever is raised, so every error a user
can trigger should be one of these.
"""


class LogitCohortError(Exception):
    """Base class for all errors raised by this package."""


class ParameterError(LogitCohortError, ValueError):
    """A configuration value is outside its valid range."""


class DimensionError(LogitCohortError, ValueError):
    """Vector or matrix shapes do not agree."""


class ZeroNormError(LogitCohortError, ValueError):
    """A vector with zero norm was passed where a direction is required."""


class NonFiniteError(LogitCohortError, ValueError):
    """Input contains NaN or infinite values."""


class FormatError(LogitCohortError, ValueError):
    """A file does not follow its binary or text layout."""


class ProtocolError(LogitCohortError, ValueError):
    """A verification protocol is inconsistent or incomplete."""


class EmptySetError(LogitCohortError, ValueError):
    """A genuine or impostor score set is empty, so metrics are undefined."""
