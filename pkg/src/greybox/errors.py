"""Exception types shared across the package."""


class GreyboxError(Exception):
    """Base class for all package errors."""


class ShapeError(GreyboxError):
    """Array dimensions do not match a declared interface."""


class ContractError(GreyboxError):
    """An argument violates a documented precondition."""


class NumericError(GreyboxError):
    """Non-finite values where finite arithmetic was required."""


class ColdStartError(GreyboxError):
    """Not enough recorded history to build the requested delay embedding.

    ``earliest_feasible_t`` is the first time at which the operation would
    succeed for the same buffer.
    """

    def __init__(self, message: str, earliest_feasible_t: float):
        super().__init__(message)
        self.earliest_feasible_t = earliest_feasible_t


class DivergenceError(GreyboxError):
    """A prediction step or rollout produced unbounded or non-finite values."""

    def __init__(self, message: str, step_index: int | None = None,
                 stage: int | None = None):
        super().__init__(message)
        self.step_index = step_index
        self.stage = stage


class TrainingFailure(GreyboxError):
    """Training loss became non-finite."""

    def __init__(self, message: str, epoch: int):
        super().__init__(message)
        self.epoch = epoch


class ConfigError(GreyboxError):
    """Malformed configuration: unknown keys or invalid values."""
