class ConfigurationError(ValueError):
    """Invalid geometry, parameter set or experiment configuration."""


class NumericError(ArithmeticError):
    """Non-finite input or an unsolvable numeric problem."""
