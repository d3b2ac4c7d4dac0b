"""Exception types raised across the package."""


class RctError(Exception):
    """Base class for all errors raised by rctgen."""


class InvalidParams(RctError, ValueError):
    pass


class InternalSamplingFailure(RctError, RuntimeError):
    pass


class EmptySolid(RctError, RuntimeError):
    pass


class DegenerateObject(RctError, RuntimeError):
    pass


class SamplingExhausted(RctError, RuntimeError):
    pass


class DegenerateCloud(RctError, ValueError):
    pass


class EmptySet(RctError, ValueError):
    pass


class DimensionMismatch(RctError, ValueError):
    pass


class LengthMismatch(RctError, ValueError):
    pass


class IndexOutOfRange(RctError, IndexError):
    pass


class UnnormalizedInput(RctError, ValueError):
    pass


class BadMagic(RctError, ValueError):
    pass


class HeterogeneousRecords(RctError, ValueError):
    pass


class ValidationFailed(RctError, RuntimeError):
    pass


class TreeOverflow(RctError, OverflowError):
    """Raised when a Catalan count is requested beyond the supported leaf range."""
