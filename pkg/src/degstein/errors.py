class DomainError(ValueError):
    """Raised when an argument lies outside the domain of an operation."""


class EnumerationCapError(DomainError):
    """Raised when brute-force enumeration is requested beyond its size cap."""
