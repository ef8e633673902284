class ReconError(Exception):
    """Base class for all reconstruction errors"""


class InvalidInputError(ReconError, ValueError):
    """Input rejected by validation"""


class DimensionError(InvalidInputError):
    """Rank or shape mismatch"""


class DomainError(InvalidInputError):
    """Coordinates outside the domain of a field"""


class UsageError(ReconError, RuntimeError):
    """API misuse, e.g. mixing Variables from different tapes"""


class NumericalError(ReconError, ArithmeticError):
    """Non-finite loss, gradient or value"""
