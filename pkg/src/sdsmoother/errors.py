"""Exception types raised by the smoother."""


class SmootherError(Exception):
    """Base class for all errors raised by this package."""


class DimensionMismatch(SmootherError, ValueError):
    pass


class NotPositiveDefinite(SmootherError, ArithmeticError):
    """A pivot block failed its Cholesky factorization.

    ``k`` is the zero-based index of the offending block.
    """

    def __init__(self, k, message=None):
        self.k = k
        super().__init__(message or f"pivot block {k} is not positive definite")


class OutOfDomain(SmootherError, ValueError):
    """Some diagonal entry of the inverse Cholesky factor is not positive."""


class LinearizedDomainViolation(SmootherError, ValueError):
    """The linearized diagonal ``vdiag + Vscript @ d`` has a non-positive entry."""


class InfeasibleStart(SmootherError, ValueError):
    """The initial state sequence lies outside the objective's domain."""
