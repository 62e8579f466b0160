"""Exception hierarchy shared by every module of the package."""


class SmibDseError(Exception):
    """Base class for all package errors."""


class ConfigError(SmibDseError, ValueError):
    """Invalid configuration or parameter value."""


class NumericalError(SmibDseError, ArithmeticError):
    """A computation produced a non-finite result."""

    def __init__(self, message, step=None):
        if step is not None:
            message = f"{message} (step {step})"
        super().__init__(message)
        self.step = step


class SingularityError(NumericalError):
    """A matrix that must be invertible or positive definite is not."""


class IoError(SmibDseError, OSError):
    """Reading or writing an artifact file failed."""
