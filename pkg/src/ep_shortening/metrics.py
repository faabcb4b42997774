"""Symbol error rate, symbol-wise mutual information and the complexity ledger."""

import math
from typing import Dict, List, Tuple

import numpy as np

from .errors import InvalidArgumentError
from .models import ComplexityLedger, EpConfig

# Operations per trellis branch and detected symbol: (additions,
# multiplications, Jacobian logarithms). The rows sum to 18 weighted
# operations; memoryless trellises skip the recursion rows.
BRANCH_OPS: Dict[str, Tuple[int, int, int]] = {
    "branch_metric": (1, 3, 0),
    "forward": (1, 0, 1),
    "backward": (1, 0, 1),
    "updated_metric": (2, 0, 0),
    "marginalization": (0, 0, 1),
    "normalization": (1, 0, 0),
}
RECURSION_ROWS = ("forward", "backward", "updated_metric")

# Moment matching per branch (mean and second moment).
PROJECTION_OPS = (2, 3, 0)
# Gaussian division per real component, with and without momentum blending.
CAVITY_OPS = (2, 6, 0)
MOMENTUM_CAVITY_OPS = (4, 11, 0)


def _ledger(ops: Tuple[int, int, int], factor: float = 1.0) -> ComplexityLedger:
    adds, mults, maxstars = ops
    return ComplexityLedger(
        additions=adds * factor,
        multiplications=mults * factor,
        jacobian_logs=maxstars * factor,
    )


def _check_shapes(pmfs: np.ndarray, truth: np.ndarray) -> None:
    if pmfs.shape[:-1] != truth.shape:
        raise InvalidArgumentError(
            f"Posteriors {pmfs.shape} and truth {truth.shape} do not match"
        )


def ser(pmfs: np.ndarray, truth: np.ndarray) -> float:
    """Fraction of symbols whose argmax decision differs from the truth.

    Ties are broken toward the lower constellation index.
    """
    pmfs = np.asarray(pmfs)
    truth = np.asarray(truth)
    _check_shapes(pmfs, truth)
    return float(np.mean(np.argmax(pmfs, axis=-1) != truth))


def smi(pmfs: np.ndarray, truth: np.ndarray, constellation) -> float:
    """Symbol-wise mutual information in bits per complex channel use.

    Each frame contributes mean(log2 M + log2 P(truth)), clipped to
    [0, log2 M]; a stack of frames (F, N, M) is averaged over frames.
    """
    pmfs = np.asarray(pmfs, dtype=float)
    truth = np.asarray(truth)
    _check_shapes(pmfs, truth)
    order = constellation.order
    capacity = math.log2(order)

    frames = pmfs if pmfs.ndim == 3 else pmfs[None]
    labels = truth if truth.ndim == 2 else truth[None]
    at_truth = np.take_along_axis(frames, labels[..., None], axis=-1)[..., 0]
    bits = np.log2(np.clip(at_truth, np.finfo(float).tiny, 1.0))
    per_frame = np.clip(capacity + bits.mean(axis=-1), 0.0, capacity)
    return float(per_frame.mean())


def bcjr_complexity(
    order: int, memory: int, complex_outputs: bool = False
) -> ComplexityLedger:
    """Operations per detected symbol of one BCJR pass."""
    branches = order ** (memory + 1)
    ledger = ComplexityLedger()
    for row, ops in BRANCH_OPS.items():
        if memory == 0 and row in RECURSION_ROWS:
            continue
        factor = 2 if complex_outputs and row == "branch_metric" else 1
        ledger = ledger + _ledger(ops, branches * factor)
    return ledger


def le_complexity(
    channel_memory: int, with_inverse: bool, components: int = 1
) -> ComplexityLedger:
    """Adaptive-filter LE with window w = 3L + 1, plus w^3 for the inverse."""
    window = 3 * channel_memory + 1
    ledger = ComplexityLedger(additions=window - 1, multiplications=window)
    if with_inverse:
        ledger = ledger + ComplexityLedger(multiplications=window**3)
    return ledger.scaled(components)


def complexity_trajectory(
    config: EpConfig, channel, design, constellation
) -> List[ComplexityLedger]:
    """Cumulative per-symbol ledger after each of the N_It + 1 NLE passes."""
    complex_outputs = not (constellation.is_real and np.all(np.imag(design.taps) == 0))
    components = 2 if complex_outputs else 1
    branches = constellation.order ** (config.nu + 1)

    nle = bcjr_complexity(constellation.order, config.nu, complex_outputs)
    cavity = _ledger(CAVITY_OPS, components)
    feedback = _ledger(PROJECTION_OPS, branches * components) + _ledger(
        MOMENTUM_CAVITY_OPS, components
    )

    total = ComplexityLedger()
    trajectory = []
    for iteration in range(config.iterations + 1):
        with_inverse = iteration > 0 or not config.mismatched_init
        le = le_complexity(channel.memory, with_inverse, components)
        total = total + le + cavity + nle
        if iteration < config.iterations:
            total = total + feedback
        trajectory.append(total)
    return trajectory


def count_complexity(
    config: EpConfig, channel, design, constellation
) -> ComplexityLedger:
    """Per-symbol operation counts of a complete EP detection."""
    return complexity_trajectory(config, channel, design, constellation)[-1]


def full_bcjr_complexity(channel, constellation) -> ComplexityLedger:
    """Per-symbol operation counts of the full-memory BCJR baseline."""
    complex_outputs = not (constellation.is_real and channel.cir.is_real)
    return bcjr_complexity(constellation.order, channel.memory, complex_outputs)
