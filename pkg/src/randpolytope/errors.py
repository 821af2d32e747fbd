"""Exception hierarchy shared by all modules."""


class RandPolytopeError(Exception):
    """Base class for library errors."""


class DimensionUnsupported(RandPolytopeError):
    pass


class DegenerateInput(RandPolytopeError):
    pass


class NonPositiveCoordinate(RandPolytopeError, ValueError):
    pass


class LPNumericalFailure(RandPolytopeError):
    pass


class EmptyInput(RandPolytopeError, ValueError):
    pass


class ChartMissing(RandPolytopeError):
    pass


class PointOutsideBody(RandPolytopeError, ValueError):
    pass


class NonIntegerDyadicLevel(RandPolytopeError, ValueError):
    pass


class RejectionBudgetExceeded(RandPolytopeError):
    pass


class InsufficientPoints(RandPolytopeError, ValueError):
    pass


class ConfigError(RandPolytopeError, ValueError):
    """Invalid experiment configuration (CLI exit code 2)."""
