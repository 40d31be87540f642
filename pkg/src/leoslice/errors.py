"""Exception types raised across the package."""


class LeoSliceError(Exception):
    """Base class for all package errors."""


class ConfigError(LeoSliceError):
    pass


class EmptyCoverage(LeoSliceError):
    """No satellite ever rises above the minimum elevation over the horizon."""


class NonPositiveDistance(LeoSliceError, ValueError):
    pass


class ZeroRate(LeoSliceError, ValueError):
    """Queue delay bound requested for a link with zero service rate."""


class EffectiveBandwidthOverflow(LeoSliceError, OverflowError):
    pass


class OutOfRange(LeoSliceError, IndexError):
    pass


class EmptySlot(LeoSliceError, ValueError):
    pass


class ParseError(LeoSliceError, ValueError):
    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class SchemaError(LeoSliceError, ValueError):
    pass


class NonFiniteLoss(LeoSliceError, FloatingPointError):
    pass


class NonPositiveMean(LeoSliceError, ValueError):
    pass


class DegenerateQuantile(LeoSliceError, ValueError):
    pass


class Infeasible(LeoSliceError):
    """Demand thresholds exceed what full reservation can serve."""

    def __init__(self, message, slot=None):
        self.slot = slot
        super().__init__(message)


class NumericalFailure(LeoSliceError):
    pass
