"""Exception types raised across the package."""


class SpectreeError(Exception):
    """Base class for all package errors."""


class BudgetExceeded(SpectreeError):
    """A vertex or dense-matrix budget would be exceeded.

    ``partial`` carries whatever statistics were gathered before the
    builder gave up, so callers can report a censored run.
    """

    def __init__(self, message, partial=None):
        super().__init__(message)
        self.partial = partial or {}


class InvalidOffspring(SpectreeError, ValueError):
    pass


class UnknownVertex(SpectreeError, KeyError):
    pass


class NotSphereSymmetric(SpectreeError, ValueError):
    pass


class InsufficientRange(SpectreeError):
    """A finite stored range is too short to finish a construction."""


class NoCutFound(SpectreeError):
    pass


class CheckFailed(SpectreeError):
    """A numerical verification failed; ``report`` holds the evidence."""

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report
