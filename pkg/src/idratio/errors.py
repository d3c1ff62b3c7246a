"""Exception types raised across the package.

Argument problems (bad orders, levels, sizes) raise plain ``ValueError``;
the classes below flag data conditions the caller may want to handle.
"""


class IdRatioError(Exception):
    """Base class for data and estimation errors."""


class ParseError(IdRatioError, ValueError):
    """Malformed input file."""

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class DatasetTooSmallError(IdRatioError, ValueError):
    """Fewer points than an operation needs."""


class DegenerateDistanceError(IdRatioError, ValueError):
    """Two points coincide, so some neighbor distance is exactly zero."""

    def __init__(self, i, j):
        self.indices = (int(i), int(j))
        super().__init__(
            f"points {int(i)} and {int(j)} are identical (zero distance); "
            "remove duplicates first (CLI: --dedupe)"
        )


class DegenerateRatioError(IdRatioError, ValueError):
    """A distance ratio equals 1 (tied neighbor distances)."""

    def __init__(self, message, point=None, order=None):
        self.point = point
        self.order = order
        super().__init__(message)


class DomainError(IdRatioError, ValueError):
    """Density or CDF evaluated outside its support."""


class MomentUndefinedError(IdRatioError, ValueError):
    """Requested moment does not exist for the given parameters."""


class EstimationFailedError(IdRatioError, RuntimeError):
    """Numerical optimizer could not locate a maximum."""

    def __init__(self, message, diagnostics=None):
        self.diagnostics = dict(diagnostics or {})
        if self.diagnostics:
            details = ", ".join(f"{k}={v!r}" for k, v in self.diagnostics.items())
            message = f"{message} ({details})"
        super().__init__(message)
