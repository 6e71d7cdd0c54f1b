"""Exception types raised by the solver suite."""


class WedgeLayerError(Exception):
    pass


class DomainError(WedgeLayerError, ValueError):
    """An argument lies outside the domain of the operation."""


class ValidationError(WedgeLayerError, ValueError):
    """A scenario violates one of the admissibility assumptions."""


class GeometryError(ValidationError):
    pass


class NoConvergenceError(WedgeLayerError, RuntimeError):
    def __init__(self, message, *, bracket=None, residual=None):
        super().__init__(message)
        self.bracket = bracket
        self.residual = residual


class QualitativeFailure(WedgeLayerError, RuntimeError):
    """A converged solution violates a qualitative property (monotonicity, sign)."""


class FitWindowError(WedgeLayerError, ValueError):
    pass


class ExtrapolationError(WedgeLayerError, ValueError):
    pass


class InvariantViolation(WedgeLayerError, RuntimeError):
    def __init__(self, message, *, node=None):
        super().__init__(message)
        self.node = node


class ContinuationFailure(NoConvergenceError):
    def __init__(self, message, *, eps=None, residual=None):
        super().__init__(message, residual=residual)
        self.eps = eps


class StepRejection(WedgeLayerError, RuntimeError):
    pass
