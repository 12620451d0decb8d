class UsageError(ValueError):
    """Invalid arguments or configuration (bad dimensions, non-positive rates, ...)."""


class NumericError(ArithmeticError):
    """A computation produced or received a non-finite value."""
