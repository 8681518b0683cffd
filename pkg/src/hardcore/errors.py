"""Exception types shared across the package."""


class DomainError(ValueError):
    """Parameter outside the region where a formula is defined."""


class ShapeError(ValueError):
    """Array of the wrong length or layout."""


class ResourceError(RuntimeError):
    """Requested computation exceeds a configured size budget."""
