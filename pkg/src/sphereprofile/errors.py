"""Exception types shared across the package."""


class SphereProfileError(Exception):
    """Base class for package errors."""


class DomainError(SphereProfileError, ValueError):
    """An input lies outside the domain where an operation is defined."""


class ResolutionError(SphereProfileError):
    """A discretization is too coarse for the requested computation."""


class ValidationError(SphereProfileError, ValueError):
    """A configuration or argument failed validation."""


class FitError(SphereProfileError, ValueError):
    """A least-squares fit is degenerate."""
