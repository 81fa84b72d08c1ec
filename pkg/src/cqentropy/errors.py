"""Exception types raised across the package.

Everything that signals bad input derives from ``ValidationError`` (and hence
``ValueError``); numerical breakdowns derive from ``NumericalError``.
"""


class ValidationError(ValueError):
    """Input violates a documented precondition."""


class NumericalError(ArithmeticError):
    """An iterative numerical routine failed."""


class NotHermitian(ValidationError):
    pass


class DimMismatch(ValidationError):
    pass


class InvalidState(ValidationError):
    pass


class InvalidDistribution(ValidationError):
    pass


class InvalidProfile(ValidationError):
    pass


class InvalidPovm(ValidationError):
    pass


class NotBinary(ValidationError):
    pass


class DimTooLarge(ValidationError):
    pass


class TooLarge(ValidationError):
    pass


class OutOfRange(ValidationError):
    pass


class SeedLengthMismatch(ValidationError):
    pass


class ConfigParse(ValidationError):
    pass


class NoConvergence(NumericalError):
    pass
