"""Exception hierarchy. Each family maps to one CLI exit code."""


class AuditError(Exception):
    exit_code = 1


class ConfigError(AuditError, ValueError):
    """Invalid configuration, contract violation or degenerate input."""

    exit_code = 2


class NumericError(AuditError, ArithmeticError):
    exit_code = 3


class TrainingError(NumericError):
    pass


class SamplingError(NumericError):
    pass


class StiffnessError(NumericError):
    """Adaptive step size collapsed below the representable minimum."""

    def __init__(self, message, t=None):
        super().__init__(message)
        self.t = t


class CapabilityError(AuditError, TypeError):
    exit_code = 2
