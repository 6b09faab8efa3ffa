"""Error taxonomy shared across the package.

The CLI maps PreconditionError to exit code 2 and NumericalError to exit
code 3; everything else is a bug.
"""


class PreconditionError(ValueError):
    """An input violates a documented precondition (bad shape, bad range)."""


class NumericalError(RuntimeError):
    """A computation failed on legal inputs (degenerate data, no convergence)."""
