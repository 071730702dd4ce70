"""Exception types shared across the package."""


class ValidationError(ValueError):
    """Input violates a documented precondition (bad shape, range, or invariant)."""


class NumericalError(ArithmeticError):
    """A numerical routine produced an unusable result (non-convergence, instability)."""


class ResourceLimitError(RuntimeError):
    """Requested problem size exceeds a hard feasibility guard."""


class DegeneratePosteriorError(NumericalError):
    """Posterior has zero mass everywhere on the temperature grid."""
