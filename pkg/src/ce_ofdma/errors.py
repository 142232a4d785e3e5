"""Exception hierarchy shared by every module of the simulator."""


class CeOfdmaError(Exception):
    """Base class for all simulator errors."""


class ConfigurationError(CeOfdmaError, ValueError):
    """Invalid or mutually inconsistent parameters."""


class DimensionError(CeOfdmaError, ValueError):
    """Array length does not match the configured dimensions."""


class DomainError(CeOfdmaError, ValueError):
    """Input outside the mathematical domain of an operation."""


class SingularityError(CeOfdmaError, ArithmeticError):
    """A division or inversion hit an exactly zero pivot."""


class NumericalError(CeOfdmaError, ArithmeticError):
    """A numerical routine failed (rank deficiency, defective eigenproblem)."""


class OptimizationError(NumericalError):
    """An optimizer encountered a non-finite objective."""


class CapacityError(CeOfdmaError, ValueError):
    """The scheduler cannot fit the requested users into the resources."""


class CrcError(CeOfdmaError):
    """DCI payload failed its CRC check (blind-detection miss)."""


class IndeterminateSpectrumError(CeOfdmaError, ValueError):
    """Spectrum carries no energy, so it cannot be classified."""
