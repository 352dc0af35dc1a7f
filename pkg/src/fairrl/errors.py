"""Exception types raised across the package."""


class FairRLError(Exception):
    """Base class for all package errors."""


class ContractError(FairRLError, ValueError):
    """An input violated a documented precondition (shape, range, normalization)."""


class NumericError(FairRLError, ArithmeticError):
    """A computation produced a non-finite value."""

    def __init__(self, message, iteration=None, config_hash=None):
        super().__init__(message)
        self.iteration = iteration
        self.config_hash = config_hash

    def __str__(self):
        parts = [super().__str__()]
        if self.iteration is not None:
            parts.append(f"iteration={self.iteration}")
        if self.config_hash is not None:
            parts.append(f"config_hash={self.config_hash}")
        return " ".join(parts)
