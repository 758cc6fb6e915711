"""Exception hierarchy shared by the solver modules and the CLI."""


class LorflowError(Exception):
    """Base class; ``exit_code`` is what the CLI returns for it."""

    exit_code = 5


class NotAdmissible(LorflowError, ValueError):
    """Curvature spectrum outside the cone where H2 is elliptic."""


class NotSpacelike(LorflowError, ValueError):
    """Graph gradient reached the light cone (|Du| >= 1)."""


class OutOfDomain(LorflowError, ValueError):
    """Time coordinate left the spacetime's declared interval."""


class StepCollapse(LorflowError, RuntimeError):
    """Adaptive step size fell under its floor.

    ``trace`` carries the telemetry accumulated up to the failure.
    """

    exit_code = 4

    def __init__(self, message, trace=None, state=None):
        super().__init__(message)
        self.trace = trace
        self.state = state


class BarrierInvalid(LorflowError):
    exit_code = 3


class ConfigError(LorflowError):
    exit_code = 2


class SchemaError(ConfigError):
    pass


class RangeError(ConfigError):
    pass


class ParseError(ConfigError):
    """Expression syntax error with 1-based position and expected tokens."""

    def __init__(self, message, line=1, column=1, expected=()):
        self.line = line
        self.column = column
        self.expected = tuple(sorted(set(expected)))
        detail = f"{message} at line {line}, column {column}"
        if self.expected:
            detail += f"; expected one of: {', '.join(self.expected)}"
        super().__init__(detail)


class EvalError(LorflowError, ArithmeticError):
    """Expression evaluated outside its domain (log of non-positive etc.)."""
