"""Exception types shared across the package."""


class InputError(ValueError):
    """Malformed or out-of-range input (CLI exit code 1)."""


class NumericalError(ArithmeticError):
    """A numerical routine failed (CLI exit code 2)."""


class TrainingError(NumericalError):
    """Non-finite value encountered during SGD."""

    def __init__(self, message: str, step: int | None = None):
        super().__init__(message)
        self.step = step


class UnsupportedScenarioError(InputError):
    """The closed-form theory does not cover the requested model/sampler combination."""
