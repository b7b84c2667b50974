"""Exception and warning types shared across the package."""


class InvalidArgument(ValueError):
    """An argument violates a documented precondition."""


class UnsupportedParameter(ValueError):
    """A parameter lies outside the range the numerics support."""


class AccuracyError(RuntimeError):
    """A result would exceed its declared accuracy bound."""


class ConstructionError(RuntimeError):
    """An internally built object failed its own consistency check."""


class AccuracyWarning(UserWarning):
    """A value was computed but its accuracy diagnostic is above tolerance."""
