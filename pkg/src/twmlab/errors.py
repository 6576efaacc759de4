"""Exception taxonomy shared across the package.

CLI exit codes: configuration-type errors exit 1, numerical errors exit 2,
suspected blow-up is a run status (exit 3), never an exception.
"""


class TwmError(Exception):
    """Base class for all package errors."""


class ConfigurationError(TwmError):
    """Bad user input: unknown names, malformed config, CFL violation."""


class ConstructionError(ConfigurationError):
    """Algebraic construction rejected (non-commuting pair, dependent pair)."""


class GeometryError(ConfigurationError):
    """Degenerate or inconsistent target geometry (singular metric, ...)."""


class DataError(ConfigurationError):
    """Initial data cannot be built (e.g. constraint monodromy on a circle)."""


class CapabilityError(ConfigurationError):
    """Operation needs data the target does not carry (e.g. a matrix rep)."""


class NumericalError(TwmError):
    """Non-finite values or other runtime numerical failures."""


class ChartDomainError(NumericalError):
    """Wave map left the validity region of its target chart."""
