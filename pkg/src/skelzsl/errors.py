"""Exception hierarchy shared by every stage.

The CLI maps these onto process exit codes (see ``skelzsl.cli``).
"""


class ZslError(Exception):
    """Base class for all package errors."""


class ShapeError(ZslError, ValueError):
    pass


class DegenerateInputError(ZslError, ValueError):
    pass


class UsageError(ZslError, ValueError):
    pass


class ConfigError(ZslError):
    pass


class DataError(ZslError):
    """Malformed data on disk or in memory."""


class TopologyError(DataError):
    pass


class ParseError(DataError):
    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class ContaminationError(DataError):
    """An unseen-class sample reached a training stage."""


class InfeasibleSplitError(ZslError):
    def __init__(self, message, found):
        self.found = found
        super().__init__(message)


class NumericalError(ZslError):
    """NaN or Inf produced during training or evaluation."""
