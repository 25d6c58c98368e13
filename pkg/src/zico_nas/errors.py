"""Exception hierarchy shared by every subpackage."""


class ValidationError(ValueError):
    """Input violates a documented precondition."""


class DimensionError(ValidationError):
    """Operand shapes are incompatible."""


class ShapeError(DimensionError):
    """A windowed op cannot produce an integral, positive output extent."""


class UsageError(RuntimeError):
    """API called in a state where it cannot run (e.g. non-scalar backward)."""


class NumericError(ArithmeticError):
    """A loss or statistic became NaN/Inf."""


class FormatError(ValidationError):
    """Malformed binary or text input."""


class ParseError(FormatError):
    def __init__(self, message, position=None):
        if position is not None:
            message = f"{message} (at {position})"
        super().__init__(message)
        self.position = position


class CapacityError(ValidationError):
    """Requested enumeration is larger than the supported bound."""


class PreconditionError(ValidationError):
    """Experiment hyperparameters violate an assumption of the bound being checked."""


class InfeasibleError(ValidationError):
    """No candidate satisfies the budget."""


class LengthError(FormatError):
    """Binary input is shorter (or longer) than its header declares."""


class ConsistencyError(FormatError):
    """Two inputs that must agree (e.g. image and label counts) do not."""
