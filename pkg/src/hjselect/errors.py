"""Exception types raised by the solvers and analysis tools."""


class HJSelectError(Exception):
    """Base class for all library errors."""


class ConfigError(HJSelectError):
    """Invalid model or experiment configuration."""


class NumericalFailure(HJSelectError):
    """A computation finished but did not meet its numerical contract."""

    def __init__(self, message, claim=None):
        super().__init__(message)
        self.claim = claim


class NonConvergence(NumericalFailure):
    def __init__(self, message, residual=float("nan"), iterations=0):
        super().__init__(f"{message} (residual={residual:.3e}, iterations={iterations})")
        self.residual = residual
        self.iterations = iterations


class InvalidSigma(NumericalFailure):
    """Lax-Friedrichs dissipation too small for a monotone scheme."""


class MonotonicityViolation(NumericalFailure):
    """The discount term f(x, .) was found non-increasing."""


class NegativeRadicand(NumericalFailure):
    """Square-root argument of a double-well case rewrite went negative."""


class SingularLinearization(NumericalFailure):
    pass


class LinearSolveFailure(NumericalFailure):
    pass


class CaseMismatch(HJSelectError):
    """(P, hbar) do not belong to the requested double-well case."""


class EmptyInterval(HJSelectError):
    """Requested level lies below the minimum of the Hamiltonian."""


class DisconnectedSublevel(HJSelectError):
    """Sublevel set of slopes is not an interval at some node."""


class DomainOverflow(HJSelectError):
    pass


class RootNotBracketed(HJSelectError):
    pass


class NotASubsolution(HJSelectError):
    pass
