"""Exception hierarchy shared across the package."""


class FedStopError(Exception):
    """Base class for all errors raised by fedstop."""


class DimensionError(FedStopError, ValueError):
    """Parameter vectors of incompatible length were combined."""


class ArgumentError(FedStopError, ValueError):
    """A function received an empty or otherwise unusable argument."""


class NumericError(FedStopError, ArithmeticError):
    """A non-finite value appeared where a finite one is required."""


class ConfigError(FedStopError, ValueError):
    """An experiment, partition or method configuration is invalid."""


class ProtocolError(FedStopError, RuntimeError):
    """A stateful component was driven out of order."""


class ClientFailure(NumericError):
    """Local training on a client diverged."""

    def __init__(self, message: str, round: int | None = None, client: int | None = None):
        super().__init__(message)
        self.round = round
        self.client = client
