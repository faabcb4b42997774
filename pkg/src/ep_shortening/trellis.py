"""Log-domain BCJR over a symbol trellis.

Branch ``b`` of a trellis with memory m is the symbol tuple whose
lexicographic index is ``b`` (oldest symbol most significant). It leaves
state ``b // M``, enters state ``b % M**m`` and carries the newest symbol
``b % M``.
"""

import logging
from dataclasses import dataclass
from typing import Callable, Optional, Tuple, Union

import numpy as np
from scipy.special import logsumexp

from .config import DEFAULT_LLR_CLIP, DEFAULT_VARIANCE_FLOOR
from .errors import NumericalError
from .messages import GaussianMessageVec
from .modulation import TransformedAlphabet

logger = logging.getLogger(__name__)

BranchMetric = Callable[[int], np.ndarray]


def maxstar(a: Union[float, np.ndarray], b: Union[float, np.ndarray]):
    """Jacobian logarithm log(e^a + e^b) = max(a, b) + log1p(e^-|a-b|)."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    hi = np.maximum(a, b)
    with np.errstate(invalid="ignore"):
        result = hi + np.log1p(np.exp(-np.abs(a - b)))
    result = np.where(np.isneginf(hi), hi, result)
    return float(result) if result.ndim == 0 else result


def clip_log_pmf(log_values: np.ndarray, clip: float, axis: int = -1) -> np.ndarray:
    """Clamp log-probabilities to within ``clip`` nats of the maximum and normalize."""
    peak = np.max(log_values, axis=axis, keepdims=True)
    clamped = np.maximum(log_values - peak, -clip)
    return clamped - logsumexp(clamped, axis=axis, keepdims=True)


@dataclass(frozen=True)
class Trellis:
    """Time-invariant symbol trellis."""

    order: int
    memory: int
    n_steps: int

    @property
    def n_states(self) -> int:
        return self.order**self.memory

    @property
    def n_branches(self) -> int:
        return self.order ** (self.memory + 1)

    @property
    def prev_state(self) -> np.ndarray:
        return np.arange(self.n_branches) // self.order

    @property
    def next_state(self) -> np.ndarray:
        return np.arange(self.n_branches) % self.n_states

    @property
    def newest_symbol(self) -> np.ndarray:
        return np.arange(self.n_branches) % self.order


@dataclass
class BcjrWorkspace:
    """State and branch log-metrics of one BCJR run.

    ``gamma`` and ``gamma_prime`` are only filled when branch outputs are kept.
    """

    alpha: np.ndarray
    beta: np.ndarray
    gamma: Optional[np.ndarray] = None
    gamma_prime: Optional[np.ndarray] = None


@dataclass
class BcjrOutput:
    """Per-step symbol PMFs, optional branch PMFs and the workspace."""

    symbol_pmfs: np.ndarray
    branch_pmfs: Optional[np.ndarray]
    workspace: BcjrWorkspace


def run_bcjr(
    trellis: Trellis,
    metric: BranchMetric,
    max_log: bool = False,
    llr_clip: float = DEFAULT_LLR_CLIP,
    keep_branches: bool = True,
) -> BcjrOutput:
    """Run the forward and backward recursions.

    Args:
        trellis: Trellis topology
        metric: Callable returning the branch log-metrics of one step
        max_log: Replace max* by max
        llr_clip: Symbol log-PMFs are clamped to max - llr_clip; branch PMFs
            feed moment matching and stay unclipped
        keep_branches: Keep gamma, gamma' and branch PMFs for every step;
            otherwise branch metrics are recomputed in the backward pass

    Returns:
        BcjrOutput with symbol PMFs of shape (steps, M)

    Raises:
        NumericalError: If a branch metric is NaN or infinite
    """
    order = trellis.order
    states = trellis.n_states
    steps = trellis.n_steps
    prev_state = trellis.prev_state
    next_state = trellis.next_state

    if max_log:

        def reduce(values: np.ndarray, axis: int) -> np.ndarray:
            return np.max(values, axis=axis)

    else:

        def reduce(values: np.ndarray, axis: int) -> np.ndarray:
            return logsumexp(values, axis=axis)

    def branch_metric(step: int) -> np.ndarray:
        gamma = np.asarray(metric(step), dtype=float)
        if not np.all(np.isfinite(gamma)):
            raise NumericalError("Non-finite branch metric", step=step)
        return gamma

    uniform = np.full(states, -np.log(states))
    alpha = np.empty((steps + 1, states))
    beta = np.empty((steps + 1, states))
    alpha[0] = uniform
    beta[steps] = uniform

    gammas = np.empty((steps, trellis.n_branches)) if keep_branches else None
    for step in range(steps):
        gamma = branch_metric(step)
        if gammas is not None:
            gammas[step] = gamma
        forward = reduce(
            (alpha[step][prev_state] + gamma).reshape(order, states), axis=0
        )
        alpha[step + 1] = forward - reduce(forward, axis=0)

    gamma_prime = np.empty_like(gammas) if keep_branches else None
    branch_pmfs = np.empty_like(gammas) if keep_branches else None
    symbol_pmfs = np.empty((steps, order))
    for step in range(steps - 1, -1, -1):
        gamma = gammas[step] if gammas is not None else branch_metric(step)
        through = gamma + beta[step + 1][next_state]
        backward = reduce(through.reshape(states, order), axis=1)
        beta[step] = backward - reduce(backward, axis=0)

        updated = alpha[step][prev_state] + through
        marginal = reduce(updated.reshape(states, order), axis=0)
        symbol_pmfs[step] = np.exp(clip_log_pmf(marginal, llr_clip))
        if keep_branches:
            gamma_prime[step] = updated
            branch_pmfs[step] = np.exp(updated - logsumexp(updated))

    workspace = BcjrWorkspace(
        alpha=alpha, beta=beta, gamma=gammas, gamma_prime=gamma_prime
    )
    return BcjrOutput(
        symbol_pmfs=symbol_pmfs, branch_pmfs=branch_pmfs, workspace=workspace
    )


class GaussianBranchMetric:
    """Gaussian log-likelihood of each branch output given per-step messages.

    gamma_i(b) = -1/2 [(mu_re - Re o)^2 / var_re + (mu_im - Im o)^2 / var_im]

    The imaginary term is dropped when every output is real. Variances below
    the floor are clamped and counted in ``clamp_events``.
    """

    def __init__(
        self,
        messages: GaussianMessageVec,
        alphabet: TransformedAlphabet,
        n_symbols: int,
        variance_floor: float = DEFAULT_VARIANCE_FLOOR,
    ):
        self.alphabet = alphabet
        self.n_symbols = n_symbols
        self.half = messages.half
        self.mean = messages.mean
        self.real_only = alphabet.is_real

        var = messages.var
        low = var < variance_floor
        if self.real_only:
            low[self.half :] = False
        self.clamp_events = int(np.count_nonzero(low))
        self.var = np.maximum(var, variance_floor)

    def __call__(self, step: int) -> np.ndarray:
        outputs = self.alphabet.step_outputs(step, self.n_symbols)
        metric = (self.mean[step] - outputs.real) ** 2 / self.var[step]
        if not self.real_only:
            k = step + self.half
            metric = metric + (self.mean[k] - outputs.imag) ** 2 / self.var[k]
        return -0.5 * metric


def gaussian_nle_metric(
    messages: GaussianMessageVec,
    alphabet: TransformedAlphabet,
    step: int,
    n_symbols: int,
    variance_floor: float = DEFAULT_VARIANCE_FLOOR,
) -> Tuple[np.ndarray, int]:
    """Branch log-metrics of one step and the number of clamped variances."""
    metric = GaussianBranchMetric(messages, alphabet, n_symbols, variance_floor)
    k = step + messages.half
    clamps = int(messages.var[step] < variance_floor)
    if not metric.real_only:
        clamps += int(messages.var[k] < variance_floor)
    return metric(step), clamps


def nle_project(
    branch_pmfs: np.ndarray,
    alphabet: TransformedAlphabet,
    n_symbols: int,
    variance_floor: float = DEFAULT_VARIANCE_FLOOR,
) -> Tuple[GaussianMessageVec, int]:
    """Moments of x^F under the branch posteriors of every step.

    Returns:
        Tuple of (moments of length 2T, number of floored variances). For a
        real alphabet the imaginary components have mean 0 and the floor
        variance and are not counted.
    """
    steps = branch_pmfs.shape[0]
    mean_re = np.empty(steps)
    mean_im = np.empty(steps)
    var_re = np.empty(steps)
    var_im = np.empty(steps)

    for step in range(steps):
        outputs = alphabet.step_outputs(step, n_symbols)
        pmf = branch_pmfs[step]
        mean_re[step] = pmf @ outputs.real
        mean_im[step] = pmf @ outputs.imag
        var_re[step] = pmf @ (outputs.real - mean_re[step]) ** 2
        var_im[step] = pmf @ (outputs.imag - mean_im[step]) ** 2

    clamps = int(np.count_nonzero(var_re < variance_floor))
    if not alphabet.is_real:
        clamps += int(np.count_nonzero(var_im < variance_floor))

    mean = np.concatenate([mean_re, mean_im])
    var = np.maximum(np.concatenate([var_re, var_im]), variance_floor)
    return GaussianMessageVec(mean, var), clamps
