"""Exception types shared across the package."""


class InvalidSpec(ValueError):
    """Torus/lattice specification violates a structural precondition."""


class TooLarge(ValueError):
    """Exact enumeration requested beyond the configured bond cap."""


class InfeasibleTarget(ValueError):
    """Critical-point target outside the attainable susceptibility range."""


class NonConvergence(RuntimeError):
    """Root solve exhausted its bracket without meeting the tolerance."""

    def __init__(self, message: str, bracket=None, achieved=None):
        super().__init__(message)
        self.bracket = bracket
        self.achieved = achieved


class DegenerateFit(RuntimeError):
    """Regression input cannot identify the requested slope."""


class EmptyConditioning(RuntimeError):
    """A conditional estimate was requested but the conditioning event never occurred."""
