"""Constellations and the transformed alphabet of shortened-channel outputs."""

import logging
import math
import re
from dataclasses import dataclass
from typing import Tuple, Union

import numpy as np

from .config import MAX_ALPHABET_SIZE
from .errors import InvalidArgumentError, ResourceLimitError
from .models import ModulationName

logger = logging.getLogger(__name__)

_MODULATION_PATTERN = re.compile(r"^\s*(pam|qam)\s*-?\s*(\d+)\s*$", re.IGNORECASE)


def gray_code(index: np.ndarray) -> np.ndarray:
    """Binary-reflected Gray label of each integer index."""
    return index ^ (index >> 1)


def _pam_levels(order: int, energy: float) -> np.ndarray:
    levels = 2 * np.arange(order) - order + 1.0
    return levels * np.sqrt(energy / np.mean(levels**2))


@dataclass(frozen=True)
class Constellation:
    """Unit average-energy symbol alphabet.

    Points are indexed in ascending level order. For QAM the index is
    ``re_index * sqrt(M) + im_index``.
    """

    name: ModulationName
    order: int
    points: np.ndarray
    per_dim_levels: np.ndarray
    labels: np.ndarray

    @property
    def is_real(self) -> bool:
        return self.name == ModulationName.PAM

    @property
    def bits_per_symbol(self) -> int:
        return int(math.log2(self.order))

    @property
    def component_energy(self) -> float:
        """Symbol energy per real component: 1 for PAM, 1/2 for QAM."""
        return 1.0 if self.is_real else 0.5

    def __str__(self) -> str:
        return f"{self.name.value}{self.order}"


def make_constellation(name: Union[str, ModulationName], order: int) -> Constellation:
    """Build a Gray-labeled, unit-energy PAM or QAM constellation.

    Args:
        name: ``pam`` or ``qam``
        order: Number of points M; a power of two, additionally a perfect
            square for QAM

    Raises:
        InvalidArgumentError: If the family or order is unsupported
    """
    try:
        family = ModulationName(str(getattr(name, "value", name)).lower())
    except ValueError:
        raise InvalidArgumentError(
            f"Unsupported modulation '{name}', expected pam or qam"
        )

    if order < 2 or order & (order - 1):
        raise InvalidArgumentError(
            f"Constellation order must be a power of two >= 2, got {order}"
        )

    if family == ModulationName.PAM:
        levels = _pam_levels(order, 1.0)
        points = levels.astype(complex)
        labels = gray_code(np.arange(order))
    else:
        side = math.isqrt(order)
        if side * side != order:
            raise InvalidArgumentError(
                f"QAM order must be a perfect square, got {order}"
            )
        levels = _pam_levels(side, 0.5)
        re_index, im_index = np.divmod(np.arange(order), side)
        points = levels[re_index] + 1j * levels[im_index]
        bits = int(math.log2(side))
        labels = (gray_code(re_index) << bits) | gray_code(im_index)

    for array in (points, levels, labels):
        array.setflags(write=False)
    return Constellation(
        name=family, order=order, points=points, per_dim_levels=levels, labels=labels
    )


def parse_modulation(text: str) -> Tuple[ModulationName, int]:
    """Split a name such as ``pam8`` or ``QAM-16`` into family and order."""
    match = _MODULATION_PATTERN.match(text)
    if not match:
        raise InvalidArgumentError(
            f"Invalid modulation '{text}', expected e.g. pam2, pam8 or qam16"
        )
    return ModulationName(match.group(1).lower()), int(match.group(2))


@dataclass(frozen=True)
class TransformedAlphabet:
    """All noiseless outputs of a target response with memory nu.

    Entry ``b`` holds the symbol tuple (x_{i-nu}, ..., x_i), oldest first,
    whose lexicographic index is ``b``, and its output sum_k f_k x_{i-k}.
    """

    constellation: Constellation
    taps: np.ndarray
    tuples: np.ndarray
    symbols: np.ndarray
    outputs: np.ndarray

    @property
    def nu(self) -> int:
        return len(self.taps) - 1

    @property
    def is_real(self) -> bool:
        """True when every output has zero imaginary part."""
        return bool(np.all(self.outputs.imag == 0))

    def __len__(self) -> int:
        return len(self.outputs)

    def step_outputs(self, step: int, n_symbols: int) -> np.ndarray:
        """Branch outputs at a trellis step of a frame of N symbols.

        Tuple positions before the frame start or after its end carry no tap,
        so edge steps see partial sums.
        """
        positions = step - self.nu + np.arange(self.nu + 1)
        valid = (positions >= 0) & (positions < n_symbols)
        if valid.all():
            return self.outputs
        return self.symbols @ (self.taps[::-1] * valid)


def enumerate_transformed_alphabet(
    constellation: Constellation,
    target_taps: np.ndarray,
    max_size: int = MAX_ALPHABET_SIZE,
) -> TransformedAlphabet:
    """Enumerate the M^(nu+1) outputs of the target response.

    Raises:
        InvalidArgumentError: If no target taps are given
        ResourceLimitError: If M^(nu+1) exceeds ``max_size``
    """
    taps = np.atleast_1d(np.asarray(target_taps, dtype=complex))
    if taps.ndim != 1 or taps.size == 0:
        raise InvalidArgumentError("Target response must hold at least one tap")

    order = constellation.order
    width = taps.size
    size = order**width
    if size > max_size:
        raise ResourceLimitError(
            f"Transformed alphabet of {order}^{width} = {size} entries "
            f"exceeds the cap of {max_size}"
        )

    index = np.arange(size)
    weights = order ** np.arange(width - 1, -1, -1)
    tuples = (index[:, None] // weights[None, :]) % order
    symbols = constellation.points[tuples]
    outputs = symbols @ taps[::-1]

    logger.debug(f"Enumerated transformed alphabet: {size} entries, nu={width - 1}")
    return TransformedAlphabet(
        constellation=constellation,
        taps=taps,
        tuples=tuples,
        symbols=symbols,
        outputs=outputs,
    )
