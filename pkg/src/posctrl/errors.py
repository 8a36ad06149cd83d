"""Exception hierarchy shared across the package."""


class PosctrlError(Exception):
    """Base class for all errors raised by this package."""


class ExpressionSyntaxError(PosctrlError):
    """Malformed expression or model-file text.

    Carries the byte offset of the offending token within the parsed text.
    """

    def __init__(self, message, offset, line=None):
        self.offset = offset
        self.line = line
        where = f"offset {offset}" if line is None else f"line {line}, offset {offset}"
        super().__init__(f"{message} ({where})")


class EvaluationError(PosctrlError):
    """Expression evaluation hit a domain error or an unbound parameter."""


class ModelFileError(PosctrlError):
    """Structurally invalid model file (dimension mismatch, unbound parameter...)."""


class IntegrationError(PosctrlError):
    """Base class for ODE-integration failures."""


class StepUnderflowError(IntegrationError):
    """The adaptive controller needed a step below ``h_min`` (stiffness signal)."""


class NonFiniteStateError(IntegrationError):
    """A state component became NaN or infinite during integration."""


class PositivityError(IntegrationError):
    """A state component fell below -1e-7 from a nonnegative initial condition.

    Small negative values are integrator round-off and are clamped; a larger
    violation indicates a field outside the positive-systems class (or a bug).
    """


class ConvergenceError(PosctrlError):
    """An iterative solver (Newton, bisection, power iteration) did not converge."""

    def __init__(self, message, best_residual=None, best_point=None):
        self.best_residual = best_residual
        self.best_point = best_point
        super().__init__(message)
