"""Gaussian messages exchanged between the linear and non-linear estimators."""

from dataclasses import dataclass
from typing import Tuple

import numpy as np

from .errors import InvalidArgumentError, NumericalError


@dataclass(frozen=True)
class GaussianMessageVec:
    """Independent Gaussian beliefs on the real components of x^F.

    ``mean[i]`` and ``mean[i + K]`` are the real and imaginary parts of
    complex position i, where K is half the vector length.
    """

    mean: np.ndarray
    var: np.ndarray

    def __post_init__(self) -> None:
        mean = np.asarray(self.mean, dtype=float)
        var = np.asarray(self.var, dtype=float)
        if mean.shape != var.shape or mean.ndim != 1:
            raise InvalidArgumentError(
                f"Message mean and variance shapes differ: {mean.shape} vs {var.shape}"
            )
        if mean.size % 2:
            raise InvalidArgumentError(
                "Message length must be even (real and imaginary parts)"
            )
        if not (np.all(np.isfinite(mean)) and np.all(np.isfinite(var))):
            raise NumericalError("Gaussian message holds non-finite entries")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "var", var)

    @property
    def half(self) -> int:
        """Number of complex positions K."""
        return self.mean.size // 2

    def __len__(self) -> int:
        return self.mean.size

    def floored(self, floor: float) -> Tuple["GaussianMessageVec", int]:
        """Clip variances from below; returns the message and the clip count."""
        low = self.var < floor
        count = int(np.count_nonzero(low))
        if not count:
            return self, 0
        return GaussianMessageVec(self.mean, np.maximum(self.var, floor)), count
