"""Exception types shared across the package."""


class ConfigError(ValueError):
    """Invalid configuration value; ``key`` names the offending dotted path."""

    def __init__(self, message, key=None):
        super().__init__(message if key is None else f"{key}: {message}")
        self.key = key


class ModelError(RuntimeError):
    """Forward model could not be assembled (e.g. singular operator)."""


class NumericError(ArithmeticError):
    """Non-finite values or failed factorizations during evaluation."""

    def __init__(self, message, iteration=None):
        if iteration is not None:
            message = f"{message} (iteration {iteration})"
        super().__init__(message)
        self.iteration = iteration
