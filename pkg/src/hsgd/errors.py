"""Exception types shared across the package."""


class HsgdError(Exception):
    """Base class for all package errors."""


class DivisibilityError(HsgdError, ValueError):
    """A period fails a required integer-divisibility relation."""


class EmptyGroupError(HsgdError, ValueError):
    """A group was declared with zero workers."""


class PeriodOrderError(HsgdError, ValueError):
    """Multi-level periods are not strictly decreasing toward the leaves."""


class SizeError(HsgdError, ValueError):
    """A count constraint (e.g. equal group sizes) is violated."""


class ExplosionError(HsgdError, ValueError):
    """An exhaustive enumeration would exceed the tractability guard."""


class NonSquareError(HsgdError, ValueError):
    """A square matrix was expected."""


class UnknownFixtureError(HsgdError, KeyError):
    """Requested objective fixture is not registered."""


class UnknownGroupError(HsgdError, IndexError):
    """Group index out of range for the grouping."""


class UnknownModelError(HsgdError, KeyError):
    """Requested communication model is not registered."""


class UnsupportedError(HsgdError, ValueError):
    """The operation is not defined for the given object."""


class BadLevelError(HsgdError, ValueError):
    """Level index outside {1..M-1} for a multi-level tree."""


class LrTooLargeError(HsgdError, ValueError):
    """Learning rate violates the validity condition under the enforce policy."""


class NonFiniteParameterError(HsgdError, FloatingPointError):
    """A worker parameter became NaN or infinite during a run."""


class NonPositiveError(HsgdError, ValueError):
    """A strictly positive scalar was required."""


class NotNonTrivialGroupingError(HsgdError, ValueError):
    """The period-rescaling region is defined only for 1 < N < n."""


class ConfigError(HsgdError, ValueError):
    """An experiment config file is malformed or inconsistent."""
