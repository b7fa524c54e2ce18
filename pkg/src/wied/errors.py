"""Exception types shared across the package."""


class ParameterError(ValueError):
    """Invalid numeric parameter (counts, extents, exponents, tolerances)."""


class DomainError(ValueError):
    """A point or field does not live on the expected domain."""


class FormatError(ValueError):
    """Serialized data does not match its declared layout."""


class DataError(ValueError):
    """Field values are not usable (NaN/Inf, wrong shape)."""


class UsageError(ValueError):
    """An operation was called outside its documented preconditions."""


class NonConvergence(RuntimeError):
    """Iteration caps were hit before the residual tolerance was met.

    The partially converged state is kept on ``report`` (and ``field`` when
    available) so callers can inspect or serialize it.
    """

    def __init__(self, message, report=None, field=None, step=None):
        super().__init__(message)
        self.report = report
        self.field = field
        self.step = step


class NonFinite(RuntimeError):
    """Iterates blew up to NaN/Inf."""
