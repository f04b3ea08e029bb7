"""Exception types shared across the package."""


class DomainError(ValueError):
    """Input violates a precondition or invariant of an operation."""


class FormatError(ValueError):
    """A file or byte stream does not match its expected layout."""
