"""Exception types shared across modules; each maps to a CLI exit code."""


class VarbesovError(Exception):
    exit_code = 1


class ConfigError(VarbesovError, ValueError):
    exit_code = 2


class PreconditionError(VarbesovError, ValueError):
    exit_code = 3


class BudgetError(PreconditionError):
    """A requested level or term count exceeds the configured budget."""


class AuditError(VarbesovError, RuntimeError):
    exit_code = 4

    def __init__(self, msg, worst_point=None, worst_error=None):
        super().__init__(msg)
        self.worst_point = worst_point
        self.worst_error = worst_error
