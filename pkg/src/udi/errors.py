"""Exception types shared across the package."""


class UDIError(Exception):
    """Base class for all package errors."""


class DimensionError(UDIError, ValueError):
    """Operand shapes are incompatible."""


class ContractError(UDIError, RuntimeError):
    """A documented precondition or invariant was violated."""


class NumericError(UDIError, FloatingPointError):
    """A non-finite value appeared where finite values are required."""


class ConfigError(UDIError, ValueError):
    """An experiment configuration failed validation."""


class DataError(UDIError, ValueError):
    """A dataset file or generator request is malformed."""
