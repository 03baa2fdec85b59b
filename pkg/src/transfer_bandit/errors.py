"""Exception hierarchy shared across the package."""


class TransferBanditError(Exception):
    """Base class for all package errors."""


class DimensionError(TransferBanditError, ValueError):
    """Operands have incompatible dimensions."""


class NumericalError(TransferBanditError, ArithmeticError):
    """A factorization or solve failed, or the input is too ill-conditioned."""


class InputError(TransferBanditError, ValueError):
    """An argument violates a documented precondition."""


class InternalInvariantError(TransferBanditError, RuntimeError):
    """A state the algorithm guarantees unreachable was reached."""


class InvariantViolation(TransferBanditError, AssertionError):
    """A checked trajectory inequality failed."""


class ConfigError(TransferBanditError, ValueError):
    """Invalid experiment configuration.

    ``path`` names the offending key as ``section.key``.
    """

    def __init__(self, path: str, message: str):
        self.path = path
        super().__init__(f"{path}: {message}")
