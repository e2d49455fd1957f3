"""Exception types shared across the package."""


class InvalidArgumentError(ValueError):
    """Shapes, dimensions or parameter ranges are inconsistent."""


class SingularityError(ArithmeticError):
    """A matrix that must be invertible or positive definite is not."""


class SingularDivisionError(ZeroDivisionError):
    """Taylor-model division by a model whose range contains zero."""


class UnsupportedOrderError(NotImplementedError):
    """Finite-difference derivatives requested beyond the supported order."""


class DivergenceError(RuntimeError):
    """Reachable-set enclosure grew past the configured width cap."""

    def __init__(self, message: str, last_valid_step: int):
        super().__init__(message)
        self.last_valid_step = last_valid_step


class ConfigError(ValueError):
    """Invalid experiment configuration; ``field`` is the dotted path."""

    def __init__(self, field: str, message: str):
        super().__init__(f"{field}: {message}")
        self.field = field
