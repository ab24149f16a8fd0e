"""Exception types raised by the library."""


class StableflowError(Exception):
    """Base class for all library errors."""


class InvalidInputError(StableflowError, ValueError):
    """An argument violates a documented precondition (shape, range, emptiness)."""


class InvalidStateError(StableflowError, RuntimeError):
    """An object is used in a way its current state does not allow (e.g. a stale
    backward cache after a parameter update, or a zero-step block)."""


class NumericOverflowError(StableflowError, ArithmeticError):
    """A numeric operation produced a non-finite value."""

    def __init__(self, message, step_index=None):
        if step_index is not None:
            message = f"{message} (step {step_index})"
        super().__init__(message)
        self.step_index = step_index


class DegenerateGradientError(StableflowError, ValueError):
    """The potential gradient vanished away from the equilibrium, so the
    projected vector field is undefined there."""


class IdxFormatError(StableflowError, ValueError):
    """An IDX file is malformed; carries the byte offset of the problem."""

    def __init__(self, message, offset=None):
        if offset is not None:
            message = f"{message} (byte offset {offset})"
        super().__init__(message)
        self.offset = offset


class DivergedTrainingError(StableflowError, RuntimeError):
    """Training produced a non-finite loss; carries the offending step."""

    def __init__(self, message, step=None):
        if step is not None:
            message = f"{message} (training step {step})"
        super().__init__(message)
        self.step = step
