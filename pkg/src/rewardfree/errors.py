"""Exception hierarchy shared by every module."""

from __future__ import annotations


class RewardFreeError(Exception):
    """Base class for all errors raised by this package."""


class InvalidDimensionError(RewardFreeError, ValueError):
    pass


class NormViolationError(RewardFreeError, ValueError):
    pass


class InvalidInputError(RewardFreeError, ValueError):
    pass


class InvalidModelError(RewardFreeError, ValueError):
    pass


class InvalidParameterError(RewardFreeError, ValueError):
    pass


class IncompletePolicyError(RewardFreeError, LookupError):
    pass


class ContractViolationError(RewardFreeError, ValueError):
    pass


class MissingRewardError(RewardFreeError, LookupError):
    pass


class ConstructionFailureError(RewardFreeError, RuntimeError):
    pass


class BudgetViolationError(RewardFreeError, RuntimeError):
    pass


class SpanViolationError(RewardFreeError, ValueError):
    pass


class ProbeFailureError(RewardFreeError, RuntimeError):
    pass


class FormatError(RewardFreeError, ValueError):
    """Raised when a file cannot be parsed; carries the offending line."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        where = f" (line {line})" if line is not None else ""
        super().__init__(f"{message}{where}")
