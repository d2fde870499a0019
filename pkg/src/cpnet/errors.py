"""Exception types shared across the package."""


class CpnetError(Exception):
    """Base class for package errors."""


class ShapeError(CpnetError, ValueError):
    """Dimensions of inputs do not agree."""


class ConvergenceError(CpnetError, RuntimeError):
    """An iterative kernel hit its iteration cap or broke down numerically."""


class NotPSDError(CpnetError, ValueError):
    pass


class RankError(CpnetError, ValueError):
    """A matrix has numerical rank above the allowed bound."""


class DivergenceError(CpnetError, RuntimeError):
    pass


class SandwichViolation(CpnetError, AssertionError):
    """A relaxation bound exceeded the known global optimum."""


class InstanceFormatError(CpnetError, ValueError):
    """Malformed instance file. ``field`` names the offending entry."""

    def __init__(self, message, field=None):
        self.field = field
        super().__init__(f"{field}: {message}" if field else message)


class UnknownSchemaError(InstanceFormatError):
    pass
