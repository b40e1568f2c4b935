"""Exception types shared across the package."""


class DimensionError(ValueError):
    """Operand shapes or dimensions are incompatible."""


class ConfigError(ValueError):
    """A configuration value is missing, malformed, or out of range."""


class FormatError(ValueError):
    """An input file is malformed; the message names the offending line."""


class NumericError(ArithmeticError):
    """A computation produced or received non-finite values."""


class UsageError(RuntimeError):
    """An API contract was violated by the caller."""


class CapabilityError(RuntimeError):
    """The request exceeds a configured capability limit."""
