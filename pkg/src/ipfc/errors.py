"""Exception types shared across the solver."""


class ConfigError(ValueError):
    """Invalid or malformed experiment configuration."""


class GridMismatchError(ValueError):
    """Operands live on different index grids."""


class NumericalError(RuntimeError):
    """Non-finite values or other numerical breakdown during stepping."""


class BulkPositivityError(NumericalError):
    """The shifted bulk energy lost positivity; the shift constant is too small."""
