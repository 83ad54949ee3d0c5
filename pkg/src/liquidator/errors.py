"""Exception hierarchy shared by the solvers, the simulator and the CLI."""


class LiquidatorError(Exception):
    """Base class for every error raised by this package."""


class ValidationError(LiquidatorError, ValueError):
    """Input parameters violate a model invariant."""


class WeightsNotSimplex(ValidationError):
    pass


class NonpositiveImpact(ValidationError):
    pass


class LengthMismatch(ValidationError):
    pass


class NumericalError(LiquidatorError, ArithmeticError):
    """A numerical routine could not produce a trustworthy value."""


class TanSingularity(NumericalError):
    """The trigonometric branch of the Riccati solution escapes to infinity."""


class StepTooLarge(NumericalError):
    pass


class QuadratureNotConverged(NumericalError):
    pass


class UnstableScheme(NumericalError):
    pass


class InfeasiblePenalty(NumericalError):
    """Terminal penalty too small for the risk-neutral closed form (2K <= eta_per)."""


class ProbabilityOverflow(NumericalError):
    pass


class InventoryUnderflow(NumericalError):
    pass


class DegenerateSample(NumericalError):
    """Sample has zero variance, so standardized moments are undefined."""
