class InvalidInput(ValueError):
    """Raised for malformed data, configuration or arguments."""


class NumericalError(ArithmeticError):
    """Raised when a factorization cannot be recovered by jitter."""
