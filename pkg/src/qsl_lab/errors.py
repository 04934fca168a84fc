"""Exception types raised across the package."""


class QSLError(Exception):
    """Base class for all errors raised by qsl_lab."""


class ShapeError(QSLError, ValueError):
    pass


class DimensionCapError(QSLError, ValueError):
    pass


class InvalidOperatorError(QSLError, ValueError):
    pass


class HermiticityError(QSLError, ValueError):
    pass


class NotAStateError(QSLError, ValueError):
    pass


class SectorError(QSLError, ValueError):
    pass


class GapConditionError(QSLError, ValueError):
    pass


class AdmissibilityError(QSLError, ValueError):
    pass


class PreconditionError(QSLError, ValueError):
    pass


class IntegratorToleranceError(QSLError, RuntimeError):
    pass


class OptimizerStalledError(QSLError, RuntimeError):
    def __init__(self, message, lower=None, upper=None):
        super().__init__(message)
        self.lower = lower
        self.upper = upper


class ConfigError(QSLError, ValueError):
    """Configuration problem; ``path`` locates the offending entry."""

    def __init__(self, path, message):
        super().__init__(f"{path}: {message}" if path else message)
        self.path = path
