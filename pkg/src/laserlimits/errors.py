"""Exception hierarchy.

Two families: ``InputError`` for anything the caller can fix by changing
arguments (CLI exit code 2), and ``NumericalError`` for failures that occur
while computing (CLI exit code 3).
"""


class LaserLimitsError(Exception):
    """Base class for all package errors."""


class InputError(LaserLimitsError, ValueError):
    pass


class NumericalError(LaserLimitsError, ArithmeticError):
    pass


class DomainError(InputError):
    """Argument lies outside the domain where a formula is defined."""


class ModelMismatch(InputError):
    """Operation does not apply to this kind of model."""


class SizeGuard(InputError):
    """Truncation or problem size outside the supported range."""


class DegenerateInput(InputError):
    pass


class MissingField(InputError):
    def __init__(self, field, formula=None):
        self.field = field
        self.formula = formula
        msg = f"missing required field {field!r}"
        if formula:
            msg += f" (needed for {formula})"
        super().__init__(msg)


class GridError(InputError):
    """Sampling grid cannot resolve the requested quantity."""


class InsufficientData(InputError):
    pass


class TruncationError(NumericalError):
    """Probability mass reached the top of the truncated Fock space."""


class ConvergenceError(NumericalError):
    pass


class StiffnessError(NumericalError):
    pass


class NonTermination(NumericalError):
    """Repeated atom passes did not end in the lower state."""
