"""Exception types shared across the toolkit.

The CLI maps these onto exit codes: validation-type errors exit 1, I/O and
storage errors exit 2, contract violations exit 3.
"""


class ValidationError(ValueError):
    """Input outside its documented domain."""


class ShapeError(ValidationError):
    """Array arity or shape does not match the model or another array."""


class FormatError(ValidationError):
    """A file is not in the expected format, version or feature order."""


class ConflictError(OSError):
    """A storage key already holds a different record."""


class ContractError(RuntimeError):
    """Internal invariant violated (e.g. a stale activation cache)."""
