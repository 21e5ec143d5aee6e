"""Exception hierarchy.

Numerical failures derive from :class:`NumericalError` so the CLI can map
them to a distinct exit status.
"""


class NlgmpError(Exception):
    pass


class DimensionError(NlgmpError, ValueError):
    pass


class NumericalError(NlgmpError, ArithmeticError):
    pass


class ConditioningError(NumericalError):
    pass


class NotPSDError(NumericalError):
    pass


class EvaluationError(NumericalError):
    """A function returned a non-finite value."""


class StepError(NumericalError):
    """Wraps a numerical failure with the chain step at which it occurred."""

    def __init__(self, step: int, cause: Exception):
        self.step = step
        self.cause = cause
        super().__init__(f"step {step}: {cause}")


class PreconditionError(NlgmpError, ValueError):
    pass


class ModelError(NlgmpError, ValueError):
    pass
