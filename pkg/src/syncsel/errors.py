class SyncselError(Exception):
    """Base class for package errors."""


class ConfigError(SyncselError, ValueError):
    pass


class DataError(SyncselError, ValueError):
    pass


class ConvergenceError(SyncselError, RuntimeError):
    pass


class NonFiniteLossError(SyncselError, FloatingPointError):
    """Raised when an objective evaluates to inf/nan.

    ``step`` is the global optimizer step when raised from the trainer,
    otherwise None.
    """

    def __init__(self, message, step=None):
        super().__init__(message)
        self.step = step
