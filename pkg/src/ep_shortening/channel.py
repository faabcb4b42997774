"""Channel impulse responses, the real-valued system model and frame transmission."""

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Union

import numpy as np
from scipy import linalg

from .config import PRUNE_BOUNDARY_TOLERANCE
from .errors import InvalidArgumentError

logger = logging.getLogger(__name__)

# Built-in impulse responses (energy-normalized on load).
PRESETS: Dict[str, List[float]] = {
    "identity": [1.0],
    "proakis-b": [0.407, 0.815, 0.407],
    "proakis-c": [0.227, 0.460, 0.688, 0.460, 0.227],
}


def real_block(matrix: np.ndarray) -> np.ndarray:
    """Real block decomposition [[Re, -Im], [Im, Re]] of a complex matrix."""
    return np.block([[matrix.real, -matrix.imag], [matrix.imag, matrix.real]])


def to_real(vector: np.ndarray) -> np.ndarray:
    """Stack real and imaginary parts of a complex vector."""
    return np.concatenate([vector.real, vector.imag])


def to_complex(vector: np.ndarray) -> np.ndarray:
    """Inverse of :func:`to_real`."""
    half = vector.shape[0] // 2
    return vector[:half] + 1j * vector[half:]


def convolution_matrix(taps: np.ndarray, n_symbols: int) -> np.ndarray:
    """Tall lower-triangular Toeplitz matrix of shape (N + L) x N."""
    memory = len(taps) - 1
    column = np.zeros(n_symbols + memory, dtype=complex)
    column[: memory + 1] = taps
    row = np.zeros(n_symbols, dtype=complex)
    row[0] = taps[0]
    return linalg.toeplitz(column, row)


@dataclass(frozen=True)
class Cir:
    """Complex channel impulse response."""

    taps: np.ndarray

    def __post_init__(self) -> None:
        taps = np.atleast_1d(np.asarray(self.taps, dtype=complex))
        if taps.ndim != 1 or taps.size == 0:
            raise InvalidArgumentError(
                "Channel impulse response must hold at least one tap"
            )
        if not np.all(np.isfinite(taps)):
            raise InvalidArgumentError("Channel impulse response taps must be finite")
        taps.setflags(write=False)
        object.__setattr__(self, "taps", taps)

    @property
    def memory(self) -> int:
        """Channel memory L."""
        return len(self.taps) - 1

    @property
    def energy(self) -> float:
        return float(np.sum(np.abs(self.taps) ** 2))

    @property
    def is_real(self) -> bool:
        return bool(np.all(self.taps.imag == 0))

    @property
    def gains_db(self) -> np.ndarray:
        """Per-tap power relative to the strongest tap, in dB."""
        power = np.abs(self.taps) ** 2
        with np.errstate(divide="ignore"):
            return 10 * np.log10(power / power.max())

    def normalize(self) -> "Cir":
        """Return the response scaled to unit energy.

        Raises:
            InvalidArgumentError: If every tap is zero
        """
        energy = self.energy
        if energy == 0:
            raise InvalidArgumentError("Cannot normalize an all-zero impulse response")
        return Cir(self.taps / np.sqrt(energy))

    @classmethod
    def from_file(cls, path: Union[str, Path]) -> "Cir":
        """Read taps from a text file, one ``re,im`` pair per line.

        Blank lines and lines starting with ``#`` are skipped. A line with a
        single number is a real tap.

        Raises:
            InvalidArgumentError: If the file is missing or malformed
        """
        path = Path(path)
        try:
            lines = path.read_text().splitlines()
        except OSError as e:
            raise InvalidArgumentError(f"Cannot read CIR file '{path}': {e}")

        taps = []
        for lineno, line in enumerate(lines, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            fields = [field.strip() for field in line.split(",")]
            try:
                if len(fields) == 1:
                    taps.append(complex(float(fields[0]), 0.0))
                elif len(fields) == 2:
                    taps.append(complex(float(fields[0]), float(fields[1])))
                else:
                    raise ValueError(f"expected 're,im', got {len(fields)} fields")
            except ValueError as e:
                raise InvalidArgumentError(
                    f"{path}:{lineno}: invalid tap '{line}' ({e})"
                )

        if not taps:
            raise InvalidArgumentError(f"CIR file '{path}' contains no taps")
        return cls(np.array(taps))

    def to_file(self, path: Union[str, Path]) -> None:
        """Write taps in the format read by :meth:`from_file`."""
        lines = [f"{tap.real!r},{tap.imag!r}" for tap in self.taps.tolist()]
        Path(path).write_text("\n".join(lines) + "\n")


@dataclass(frozen=True)
class RealChannel:
    """Real-valued block model y = Hx + n of a tall Toeplitz channel."""

    cir: Cir
    n_symbols: int
    esn0_db: float
    n0: float
    H: np.ndarray

    @property
    def memory(self) -> int:
        return self.cir.memory

    @property
    def n_outputs(self) -> int:
        """Number of complex received samples N + L."""
        return self.n_symbols + self.memory

    @property
    def H_complex(self) -> np.ndarray:
        return convolution_matrix(self.cir.taps, self.n_symbols)


@dataclass(frozen=True)
class Frame:
    """One transmitted block and its noisy observation."""

    x: np.ndarray
    y: np.ndarray
    noise: np.ndarray
    indices: np.ndarray
    seed: int

    @property
    def symbols(self) -> np.ndarray:
        """Transmitted complex symbols."""
        return to_complex(self.x)


def build_real_channel(cir: Cir, n_symbols: int, esn0_db: float) -> RealChannel:
    """Build the real-valued system model for a block of N symbols.

    Args:
        cir: Channel impulse response
        n_symbols: Block length N in complex symbols
        esn0_db: Es/N0 in dB; ``inf`` gives a noiseless channel

    Returns:
        RealChannel with H of shape 2(N+L) x 2N and N0 per real dimension

    Raises:
        InvalidArgumentError: If N < 1 or the response is empty
    """
    if n_symbols < 1:
        raise InvalidArgumentError(f"Block length must be at least 1, got {n_symbols}")
    if len(cir.taps) == 0:
        raise InvalidArgumentError(
            "Channel impulse response must hold at least one tap"
        )

    H = real_block(convolution_matrix(cir.taps, n_symbols))
    H.setflags(write=False)
    n0 = 10 ** (-esn0_db / 10) / 2

    logger.debug(
        f"Built channel: L={cir.memory}, N={n_symbols}, Es/N0={esn0_db} dB, N0={n0:.4e}"
    )
    return RealChannel(cir=cir, n_symbols=n_symbols, esn0_db=esn0_db, n0=n0, H=H)


def prune_taps(cir: Cir, threshold_db: float) -> Cir:
    """Drop weak leading and trailing taps and renormalize.

    Taps whose power relative to the strongest tap is strictly below
    ``threshold_db`` are removed from both ends; the contiguous span between
    the first and last kept tap survives unchanged. The comparison runs on
    power ratios, and a ratio within ``PRUNE_BOUNDARY_TOLERANCE`` (relative)
    of the threshold counts as below it, so a tap of exactly -20 dB such as
    0.09 next to 0.9 is pruned.

    Raises:
        InvalidArgumentError: If the threshold is not negative or nothing remains
    """
    if threshold_db >= 0:
        raise InvalidArgumentError(
            f"Pruning threshold must be negative, got {threshold_db} dB"
        )
    if cir.energy == 0:
        raise InvalidArgumentError("All taps pruned: impulse response has zero energy")

    power = np.abs(cir.taps) ** 2
    bound = 10.0 ** (threshold_db / 10.0) * (1.0 + PRUNE_BOUNDARY_TOLERANCE)
    kept = np.flatnonzero(power / power.max() >= bound)
    if kept.size == 0:
        raise InvalidArgumentError("All taps pruned")

    start, stop = int(kept[0]), int(kept[-1]) + 1
    if start > 0 or stop < len(cir.taps):
        logger.debug(
            f"Pruned {start} leading and {len(cir.taps) - stop} trailing taps "
            f"below {threshold_db} dB"
        )
    return Cir(cir.taps[start:stop]).normalize()


def frame_seed(master_seed: int, frame_index: int) -> int:
    """Derive the 64-bit seed of one frame from the master seed.

    The split uses ``numpy.random.SeedSequence(master_seed,
    spawn_key=(frame_index,))`` and takes its first 64-bit state word, so the
    same frame index sees the same symbols and normalized noise in every
    sweep cell.
    """
    sequence = np.random.SeedSequence(master_seed, spawn_key=(frame_index,))
    return int(sequence.generate_state(1, dtype=np.uint64)[0])


def transmit(channel: RealChannel, constellation, rng_seed: int) -> Frame:
    """Draw uniform i.i.d. symbols and pass them through the channel.

    Symbols are drawn first and unit-variance noise second from a PCG64
    generator; the noise is then scaled by sqrt(N0).
    """
    rng = np.random.default_rng(rng_seed)
    n = channel.n_symbols

    indices = rng.integers(0, constellation.order, size=n)
    x = to_real(constellation.points[indices])
    noise = np.sqrt(channel.n0) * rng.standard_normal(2 * channel.n_outputs)
    y = channel.H @ x + noise

    return Frame(x=x, y=y, noise=noise, indices=indices, seed=rng_seed)


def load_cir(spec: str, prune_db: Optional[float] = None) -> Cir:
    """Resolve a preset name or CIR file path into a normalized response.

    Args:
        spec: Preset name (case-insensitive) or path to a CIR file
        prune_db: Optional pruning threshold applied after loading

    Raises:
        InvalidArgumentError: If the name is neither a preset nor a readable file
    """
    key = spec.strip().lower()
    if key in PRESETS:
        cir = Cir(np.array(PRESETS[key]))
    elif Path(spec).is_file():
        cir = Cir.from_file(spec)
    else:
        presets = ", ".join(sorted(PRESETS))
        raise InvalidArgumentError(
            f"Unknown channel '{spec}': not a preset ({presets}) or a readable file"
        )

    cir = cir.normalize()
    if prune_db is not None:
        cir = prune_taps(cir, prune_db)
    return cir
