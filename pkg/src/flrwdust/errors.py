"""Exception hierarchy shared by every module of the package."""


class FlrwDustError(Exception):
    """Base class for all package errors."""


class DomainError(FlrwDustError, ValueError):
    """An argument lies outside the mathematical domain of an operation."""


class ConfigurationError(FlrwDustError, ValueError):
    """Invalid or inconsistent construction parameters."""


class SuperluminalDataError(DomainError):
    """The initial speed eps*|v0| reached or exceeded the light speed."""


class QuadratureError(FlrwDustError, ArithmeticError):
    """Adaptive quadrature failed to reach the requested tolerance."""

    def __init__(self, message, achieved=None, requested=None):
        super().__init__(message)
        self.achieved = achieved
        self.requested = requested


class BlownUpStateError(FlrwDustError, ArithmeticError):
    """The flow-map determinant is non-positive: the classical solution is gone."""

    def __init__(self, t, alpha, det):
        super().__init__(f"det(dx/dalpha) = {det:.3e} <= 0 at t={t!r}, alpha={alpha!r}")
        self.t = t
        self.alpha = alpha
        self.det = det


class InversionError(FlrwDustError, ArithmeticError):
    """Newton inversion of the flow map did not converge."""


class ResolutionError(FlrwDustError, ArithmeticError):
    """A sampling grid is too coarse to bracket a sign change reliably."""


class HorizonError(FlrwDustError, ArithmeticError):
    """No determinant zero was found before the requested time horizon."""

    def __init__(self, message, F2_at_horizon=None, projected=None):
        super().__init__(message)
        self.F2_at_horizon = F2_at_horizon
        self.projected = projected


class PreconditionError(FlrwDustError, ValueError):
    """An operation was called outside the hypotheses it relies on."""


class FitDiagnosticsError(FlrwDustError, ArithmeticError):
    """A log-log rate fit was too poor to be trusted."""

    def __init__(self, message, samples=None):
        super().__init__(message)
        self.samples = samples


class StepError(FlrwDustError, ArithmeticError):
    """The grid solver was asked to take a step violating its CFL bound."""


class InstabilityError(FlrwDustError, ArithmeticError):
    """The grid solver produced non-finite or superluminal values."""
