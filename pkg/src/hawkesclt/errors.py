"""Exception hierarchy shared by all modules.

Each class carries the CLI exit code it maps to.
"""


class HawkesCLTError(Exception):
    exit_code = 1


class ConfigError(HawkesCLTError, ValueError):
    exit_code = 2


class InvalidKernelError(ConfigError):
    pass


class InvalidMarksError(ConfigError):
    pass


class StabilityError(ConfigError):
    """Raised when ||phi||_1 >= 1 (or another stability quantity is out of range)."""

    def __init__(self, message, quantity=None, value=None):
        super().__init__(message)
        self.quantity = quantity
        self.value = value


class ContractError(HawkesCLTError, ValueError):
    pass


class OutOfRangeError(ContractError):
    pass


class NumericalFailure(HawkesCLTError, RuntimeError):
    exit_code = 4

    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class EnvelopeBreach(NumericalFailure):
    pass


class VerificationFailure(HawkesCLTError):
    exit_code = 3
