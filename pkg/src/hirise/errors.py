class HiriseError(Exception):
    """Base class for all package errors."""


class GeometryError(HiriseError, ValueError):
    """Dimensions, pooling factors or boxes that do not fit together."""


class EmptyBranchSet(HiriseError, ValueError):
    """A resistor network was asked to average zero inputs."""


class ConfigError(HiriseError, ValueError):
    """Invalid configuration values."""


class UndefinedRatio(HiriseError, ZeroDivisionError):
    """A reduction ratio was requested for a session that moved no data."""
