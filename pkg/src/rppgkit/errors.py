"""Exception types raised across the package.

Every error derives from :class:`RppgError` (itself a ``ValueError``) so callers
can catch data problems in one place; the CLI maps them to exit code 2.
"""


class RppgError(ValueError):
    pass


class ConstantSignal(RppgError):
    pass


class InvalidRate(RppgError):
    pass


class LengthMismatch(RppgError):
    pass


class WindowTooLong(RppgError):
    pass


class InvalidBand(RppgError):
    pass


class DesignFailure(RppgError):
    pass


class SignalTooShort(RppgError):
    pass


class InvalidFrequency(RppgError):
    pass


class EmptyMask(RppgError):
    pass


class TraceTooShort(RppgError):
    pass


class DegenerateWindow(RppgError):
    pass


class DegenerateTrace(RppgError):
    pass


class SingularCovariance(RppgError):
    pass


class ShapeMismatch(RppgError):
    pass


class InputTooShort(RppgError):
    pass


class NonFiniteLoss(RppgError):
    pass


class InsufficientData(RppgError):
    pass


class NoTransitions(RppgError):
    pass


class InsufficientOverlap(RppgError):
    pass


class InvalidBandwidth(RppgError):
    pass


class NoSegments(RppgError):
    pass


class SchemaError(RppgError):
    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class NonMonotoneTimestamps(RppgError):
    pass


class InvalidConfig(RppgError):
    pass


class InvalidRepetitions(RppgError):
    pass


class CheckpointError(RppgError):
    pass


class BiomarkerOutOfBounds(RppgError):
    pass
