"""Target-response design and the channel-shortening receive filter.

The receive filter is W = F B H^T / N0 with B = (H^T H / N0 + I / sx2)^-1,
sx2 being the symbol energy per real component. With F = I this is the
LMMSE filter. All matrices are built on the complex N-dimensional model and
then mapped to the real block form, which commutes with products and
inverses.
"""

import logging
from dataclasses import dataclass
from functools import cached_property
from typing import Optional, Tuple

import numpy as np
from scipy import linalg

from .banded import BandedLinearEstimator
from .channel import (
    Cir,
    RealChannel,
    convolution_matrix,
    real_block,
    to_complex,
    to_real,
)
from .config import PSEUDO_INVERSE_CONDITION_CAP
from .errors import InvalidArgumentError, NumericalError
from .models import ShorteningModeKind

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class ShorteningMode:
    """How the target taps are chosen."""

    kind: ShorteningModeKind
    taps: Optional[np.ndarray] = None

    @classmethod
    def identity(cls) -> "ShorteningMode":
        return cls(ShorteningModeKind.IDENTITY)

    @classmethod
    def mmse_min_eig(cls) -> "ShorteningMode":
        return cls(ShorteningModeKind.MMSE_MIN_EIG)

    @classmethod
    def full(cls) -> "ShorteningMode":
        return cls(ShorteningModeKind.FULL)

    @classmethod
    def fixed(cls, taps) -> "ShorteningMode":
        taps = np.atleast_1d(np.asarray(taps, dtype=complex))
        if taps.size == 0:
            raise InvalidArgumentError(
                "Fixed target response must hold at least one tap"
            )
        return cls(ShorteningModeKind.FIXED_TAPS, taps)

    @classmethod
    def parse(cls, text: str) -> "ShorteningMode":
        """Parse ``identity``, ``mmse-min-eig``, ``full`` or ``taps:<file>``."""
        text = text.strip()
        if text.lower().startswith("taps:"):
            return cls.fixed(Cir.from_file(text[len("taps:") :]).taps)
        try:
            kind = ShorteningModeKind(text.lower().replace("_", "-"))
        except ValueError:
            raise InvalidArgumentError(
                f"Invalid shortening mode '{text}', expected identity, mmse-min-eig, "
                "full or taps:<file>"
            )
        if kind == ShorteningModeKind.FIXED_TAPS:
            raise InvalidArgumentError("Fixed taps need a file: use taps:<file>")
        return cls(kind)

    def __str__(self) -> str:
        return self.kind.value


@dataclass(frozen=True)
class ShorteningDesign:
    """Target response F, receive filter W and the matrices the detector reuses.

    Attributes:
        taps: Complex target taps of length nu + 1
        F: Real block form of the (N+nu) x N target convolution matrix
        F_pinv: Pseudo-inverse (F^T F)^-1 F^T
        W: Receive filter, shape 2(N+nu) x 2(N+L)
        B: (H^T H / N0 + I / sx2)^-1
        ffT: Prior covariance F F^T (unit symbol energy)
        ffT_diag: Its diagonal
        init_var: Diagonal of F B F^T, the first-pass LE variance
        gram: F_pinv^T H^T H F_pinv / N0
        projection: F_pinv^T H^T / N0
        residual_mse: Steady-state MSE of the target output estimate
    """

    channel: RealChannel
    mode: ShorteningMode
    nu: int
    symbol_energy: float
    taps: np.ndarray
    F: np.ndarray
    F_pinv: np.ndarray
    W: np.ndarray
    B: np.ndarray
    ffT: np.ndarray
    ffT_diag: np.ndarray
    init_var: np.ndarray
    gram: np.ndarray
    projection: np.ndarray
    condition_number: float
    residual_mse: float

    @property
    def n_symbols(self) -> int:
        return self.channel.n_symbols

    @property
    def n_positions(self) -> int:
        """Number of complex positions of x^F, N + nu."""
        return self.channel.n_symbols + self.nu

    @property
    def decoupled(self) -> bool:
        """Real channel and real target: real and imaginary parts never mix."""
        return self.channel.cir.is_real and bool(np.all(np.imag(self.taps) == 0))

    @cached_property
    def banded(self) -> BandedLinearEstimator:
        """Banded LE solver for this design, built on first use."""
        return BandedLinearEstimator.build(
            self.F, self.channel.H, self.channel.n0, self.nu, self.channel.memory
        )


def pseudo_inverse(
    matrix: np.ndarray, condition_cap: float = PSEUDO_INVERSE_CONDITION_CAP
) -> np.ndarray:
    """Left pseudo-inverse (A^H A)^-1 A^H of a tall full-rank matrix.

    Raises:
        NumericalError: If the condition number of A^H A exceeds the cap
    """
    gram = matrix.conj().T @ matrix
    eigenvalues = linalg.eigvalsh(gram)
    condition = eigenvalues[-1] / eigenvalues[0] if eigenvalues[0] > 0 else np.inf
    if not condition <= condition_cap:
        raise NumericalError(
            "Target matrix F^T F is not invertible", condition_number=condition
        )
    return linalg.cho_solve(linalg.cho_factor(gram), matrix.conj().T)


def pseudo_inverse_F(design: ShorteningDesign) -> np.ndarray:
    """Pseudo-inverse of the design's target matrix (computed at design time)."""
    return design.F_pinv


def steady_state_window(B_complex: np.ndarray, nu: int) -> np.ndarray:
    """Principal (nu+1) x (nu+1) submatrix of B starting mid-frame."""
    n = B_complex.shape[0]
    if nu + 1 > n:
        raise InvalidArgumentError(
            f"Block length {n} is shorter than the target span {nu + 1}"
        )
    start = min(n // 2, n - nu - 1)
    return B_complex[start : start + nu + 1, start : start + nu + 1]


def target_residual_mse(B_complex: np.ndarray, taps: np.ndarray) -> float:
    """Steady-state MSE of sum_k f_k xhat_{i-k} against the true target output."""
    window = steady_state_window(B_complex, len(taps) - 1)
    v = np.conj(taps[::-1])
    return float(np.real(np.conj(v) @ window @ v))


def min_eig_taps(B_complex: np.ndarray, nu: int) -> Tuple[np.ndarray, float]:
    """Unit-norm target taps minimizing the steady-state residual MSE.

    Returns:
        Tuple of (taps, minimum eigenvalue); the largest-magnitude tap is real
        positive
    """
    window = steady_state_window(B_complex, nu)
    if np.all(np.imag(window) == 0):
        window = np.real(window)
    eigenvalues, vectors = linalg.eigh(window)
    taps = np.conj(vectors[:, 0])[::-1].astype(complex)

    lead = taps[np.argmax(np.abs(taps))]
    taps = taps * (np.conj(lead) / np.abs(lead))
    if np.isrealobj(window):
        taps = taps.real.astype(complex)
    return taps, float(eigenvalues[0])


def _target_taps(
    mode: ShorteningMode, nu: int, channel: RealChannel, B_complex: np.ndarray
) -> np.ndarray:
    if mode.kind == ShorteningModeKind.IDENTITY:
        if nu != 0:
            raise InvalidArgumentError(f"Identity target has memory 0, got nu={nu}")
        return np.ones(1, dtype=complex)
    if mode.kind == ShorteningModeKind.FULL:
        if nu != channel.memory:
            raise InvalidArgumentError(
                f"Full target has the channel memory {channel.memory}, got nu={nu}"
            )
        return channel.cir.taps.copy()
    if mode.kind == ShorteningModeKind.FIXED_TAPS:
        if mode.taps is None or len(mode.taps) != nu + 1:
            count = 0 if mode.taps is None else len(mode.taps)
            raise InvalidArgumentError(
                f"Fixed target needs nu+1={nu + 1} taps, got {count}"
            )
        return np.asarray(mode.taps, dtype=complex)
    taps, _ = min_eig_taps(B_complex, nu)
    return taps


def design(
    channel: RealChannel,
    nu: int,
    mode: ShorteningMode,
    symbol_energy: float = 1.0,
    condition_cap: float = PSEUDO_INVERSE_CONDITION_CAP,
) -> ShorteningDesign:
    """Design the target response and receive filter for one channel and SNR.

    Args:
        channel: Real-valued channel model (N0 > 0)
        nu: Target memory, 0 <= nu <= L
        mode: Target construction
        symbol_energy: Symbol energy per real component
        condition_cap: Largest accepted condition number of F^T F

    Returns:
        ShorteningDesign with all matrices the detector needs

    Raises:
        InvalidArgumentError: If nu is out of range or N0 is not positive
        NumericalError: If F^T F is too ill-conditioned to invert
    """
    if not 0 <= nu <= channel.memory:
        raise InvalidArgumentError(
            f"Target memory nu={nu} must lie in [0, {channel.memory}]"
        )
    if channel.n0 <= 0:
        raise InvalidArgumentError("Shortening design needs a positive noise variance")
    if symbol_energy <= 0:
        raise InvalidArgumentError(
            f"Symbol energy must be positive, got {symbol_energy}"
        )

    n0 = channel.n0
    n = channel.n_symbols
    H = channel.H_complex
    if np.all(H.imag == 0):
        H = H.real

    gram_h = H.conj().T @ H
    regularized = linalg.cho_factor(gram_h + (n0 / symbol_energy) * np.eye(n))
    B = n0 * linalg.cho_solve(regularized, np.eye(n))

    taps = _target_taps(mode, nu, channel, B)
    F = convolution_matrix(taps, n)
    W = F @ linalg.cho_solve(regularized, H.conj().T)

    F_pinv = pseudo_inverse(F, condition_cap)
    gram = F_pinv.conj().T @ gram_h @ F_pinv / n0
    projection = F_pinv.conj().T @ H.conj().T / n0
    ffT = F @ F.conj().T
    init_var = np.real(np.sum((F @ B) * F.conj(), axis=1))

    eigenvalues = linalg.eigvalsh(F.conj().T @ F)
    condition = float(eigenvalues[-1] / eigenvalues[0])
    residual = target_residual_mse(B, taps)

    logger.debug(
        f"Designed {mode} target nu={nu}: taps={np.round(taps, 4)}, "
        f"residual MSE={residual:.4e}, cond(F^T F)={condition:.3e}"
    )

    ffT_real = real_block(ffT)
    return ShorteningDesign(
        channel=channel,
        mode=mode,
        nu=nu,
        symbol_energy=symbol_energy,
        taps=taps,
        F=real_block(F),
        F_pinv=real_block(F_pinv),
        W=real_block(W),
        B=real_block(B),
        ffT=ffT_real,
        ffT_diag=np.diag(ffT_real).copy(),
        init_var=np.concatenate([init_var, init_var]),
        gram=real_block(gram),
        projection=real_block(projection),
        condition_number=condition,
        residual_mse=residual,
    )


def shortened_observation(
    design: ShorteningDesign, y: np.ndarray, method: str = "dense"
) -> np.ndarray:
    """Apply the receive filter, y^F = W y.

    Args:
        design: Shortening design
        y: Real received vector of length 2(N+L)
        method: ``dense`` multiplies by W; ``banded`` solves the Hermitian
            banded system (H^H H + N0/sx2 I) z = H^H y and filters z with the
            target taps

    Returns:
        Real vector of length 2(N+nu)
    """
    channel = design.channel
    if y.shape != (2 * channel.n_outputs,):
        raise InvalidArgumentError(
            f"Observation must have length {2 * channel.n_outputs}, got {y.shape}"
        )
    if method == "dense":
        return design.W @ y
    if method != "banded":
        raise InvalidArgumentError(
            f"Unknown filter method '{method}', expected dense or banded"
        )

    h = channel.cir.taps
    memory = channel.memory
    n = channel.n_symbols

    matched = np.convolve(to_complex(y), np.conj(h[::-1]))[memory : memory + n]
    bands = np.zeros((memory + 1, n), dtype=complex)
    for lag in range(memory + 1):
        bands[memory - lag, lag:] = np.sum(np.conj(h[lag:]) * h[: memory + 1 - lag])
    bands[memory] += channel.n0 / design.symbol_energy

    z = linalg.solveh_banded(bands, matched)
    return to_real(np.convolve(z, design.taps))
