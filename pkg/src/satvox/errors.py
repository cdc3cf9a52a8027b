"""Error types shared across the package.

DomainError maps to CLI exit code 1, FormatError to exit code 2.
"""


class DomainError(ValueError):
    """Input violates an operation's domain (bad shapes, out-of-range values, ...)."""


class FormatError(RuntimeError):
    """A file or config does not conform to its declared format."""
