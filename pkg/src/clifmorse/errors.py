"""Exception hierarchy shared by all modules.

The command line maps :class:`ValidationError` to exit code 2 and
:class:`ConvergenceError` to exit code 3.
"""


class ValidationError(ValueError):
    """An input violates a documented precondition or invariant."""


class CliffordRelationError(ValidationError):
    """Matrices fail the Clifford relations beyond tolerance."""


class MembershipError(ValidationError):
    """A matrix is not in the required midpoint set."""


class AliasingError(ValidationError):
    """A sampled loop is too coarse for phase unwrapping."""


class GuardError(ValidationError):
    """A polygon or grid violates its resolution guard."""


class ConvergenceError(RuntimeError):
    """An iterative procedure failed to reach its target."""


class PaddingCapError(ValidationError):
    """Hypotheses cannot be reached within the configured padding cap."""
