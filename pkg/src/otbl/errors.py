"""Exception hierarchy shared by all solvers."""


class OTBLError(Exception):
    """Base class for errors raised by this package."""


class DomainError(OTBLError, ValueError):
    """An argument lies outside the domain of the operation."""


class InfeasibleError(OTBLError):
    """Marginals admit no coupling (masses differ)."""


class ConvergenceError(OTBLError):
    """An iterative solver stopped before reaching its tolerance."""

    def __init__(self, message, residual=float("nan"), iterations=0):
        super().__init__(f"{message} (residual={residual:.3e}, iterations={iterations})")
        self.residual = residual
        self.iterations = iterations


class CapacityError(OTBLError):
    """A combinatorial enumeration would exceed its configured size bound."""


class NondifferentiableError(OTBLError):
    """A derivative was requested at a point where the map has a kink."""
