"""Exception types shared across the package.

ValidationError maps to CLI exit code 1, NumericError to exit code 2.
"""


class ValidationError(ValueError):
    """Bad shapes, inconsistent configs, or out-of-contract arguments."""


class NumericError(RuntimeError):
    """Non-finite values or violated numeric guarantees (e.g. a growth
    step that was required to preserve the output exactly but did not)."""
