"""Exceptions raised by epshort."""

from typing import Optional


class EpShortError(Exception):
    """Base class for all epshort errors."""


class InvalidArgumentError(EpShortError, ValueError):
    """An argument is outside the domain an operation accepts."""


class ResourceLimitError(EpShortError, RuntimeError):
    """A requested structure exceeds a configured size cap."""


class NumericalError(EpShortError, RuntimeError):
    """A numerical failure (ill-conditioning, NaN/Inf) during detection.

    The optional context attributes are appended to the message so that the
    sweep status column and CLI output carry them.
    """

    def __init__(
        self,
        message: str,
        condition_number: Optional[float] = None,
        iteration: Optional[int] = None,
        step: Optional[int] = None,
    ):
        self.reason = message
        self.condition_number = condition_number
        self.iteration = iteration
        self.step = step

        details = []
        if condition_number is not None:
            details.append(f"condition number {condition_number:.3e}")
        if iteration is not None:
            details.append(f"iteration {iteration}")
        if step is not None:
            details.append(f"step {step}")
        if details:
            message = f"{message} ({', '.join(details)})"

        super().__init__(message)

    def at_iteration(self, iteration: int) -> "NumericalError":
        """Return a copy annotated with the detector iteration index."""
        return NumericalError(
            self.reason,
            condition_number=self.condition_number,
            iteration=iteration,
            step=self.step,
        )
