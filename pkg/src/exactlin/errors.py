"""Exception hierarchy shared by every stage of the pipeline."""


class ExactlinError(Exception):
    """Base class for all errors raised by this package."""


class UnboundSymbol(ExactlinError):
    pass


class DomainError(ExactlinError):
    """log of a non-positive value, sqrt of a negative one, division by zero."""


class UnboundedInterval(ExactlinError):
    """A finite bound was demanded but the variable box is open."""


class ModelError(ExactlinError):
    """A Model violates one of its structural invariants."""


class ModelParseError(ExactlinError):
    def __init__(self, diagnostics):
        self.diagnostics = list(diagnostics)
        first = self.diagnostics[0] if self.diagnostics else None
        msg = str(first) if first else "parse failed"
        if len(self.diagnostics) > 1:
            msg += f" (+{len(self.diagnostics) - 1} more)"
        super().__init__(msg)


class NotLinear(ExactlinError):
    def __init__(self, path, message=None):
        self.path = path
        super().__init__(message or f"nonlinear subexpression at {path}")


class UnsupportedNonlinearity(ExactlinError):
    def __init__(self, path, message):
        self.path = path
        super().__init__(f"{path}: {message}")


class RewriteError(ExactlinError):
    pass


class FractionalNotIsolated(RewriteError):
    pass


class DenominatorNotPositive(RewriteError):
    pass


class FractionalWithIntegers(RewriteError):
    pass


class NonAffineArg(RewriteError):
    pass


class NonInvertibleOnRange(RewriteError):
    pass


class NonTermination(RewriteError):
    pass


class SolverError(ExactlinError):
    pass


class NoConvergence(SolverError):
    pass


class OracleScaleExceeded(SolverError):
    pass


class ProjectionFailure(SolverError):
    pass


class MetricsError(ExactlinError):
    pass
