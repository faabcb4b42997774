"""EP detection in the channel-shortened signal space, plus the LMMSE and
full-BCJR baselines.

One pass runs LE -> cavity -> NLE. Iterations 0..N_It-1 then project the NLE
branch posteriors onto Gaussian moments of x^F and send the momentum-smoothed
cavity back to the LE. A final pass after the last iteration produces the
output, so a detector with N_It iterations runs N_It + 1 NLE passes.
"""

import logging
from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np
from scipy import linalg

from .channel import RealChannel
from .config import DEFAULT_LLR_CLIP, DEFAULT_VARIANCE_FLOOR
from .errors import InvalidArgumentError, NumericalError
from .messages import GaussianMessageVec
from .metrics import ser, smi
from .models import EpConfig, LeSolver, MomentumDomain
from .modulation import Constellation, enumerate_transformed_alphabet
from .shorten import ShorteningDesign, ShorteningMode, design as design_filter
from .trellis import GaussianBranchMetric, Trellis, nle_project, run_bcjr

logger = logging.getLogger(__name__)


@dataclass
class EpDiagnostics:
    """Per-pass counters and, when the truth is known, per-pass SER and SMI."""

    neg_var_rejects: List[int] = field(default_factory=list)
    clamp_events: List[int] = field(default_factory=list)
    ser: List[float] = field(default_factory=list)
    smi: List[float] = field(default_factory=list)

    @property
    def total_rejects(self) -> int:
        return sum(self.neg_var_rejects)

    @property
    def total_clamps(self) -> int:
        return sum(self.clamp_events)


@dataclass
class DetectionResult:
    """Per-symbol posterior PMFs over the constellation."""

    pmfs: np.ndarray
    diagnostics: EpDiagnostics = field(default_factory=EpDiagnostics)
    trajectory: Optional[List[np.ndarray]] = None

    @property
    def decisions(self) -> np.ndarray:
        """Hard decisions; ties go to the lower constellation index."""
        return np.argmax(self.pmfs, axis=1)


def le_estimate(
    design: ShorteningDesign,
    y: np.ndarray,
    prior: GaussianMessageVec,
    iteration: int,
    mismatched_init: bool = True,
    solver: LeSolver = LeSolver.DENSE,
) -> GaussianMessageVec:
    """Gaussian posterior of x^F given y and the diagonal prior (m_A, v_A).

    The general solve uses Sigma = (G + V_A^-1)^-1 and
    mu = Sigma (F_pinv^T H^T y / N0 + V_A^-1 m_A). On the first pass with
    mismatched initialization the prior covariance is the full F F^T, which
    gives mu = W y and Sigma = F B F^T. The banded solver returns the same
    posterior from banded Cholesky factors.

    Raises:
        NumericalError: If the precision matrix is not positive definite
    """
    if iteration == 0 and mismatched_init:
        return GaussianMessageVec(design.W @ y, design.init_var.copy())
    if solver == LeSolver.BANDED:
        try:
            return design.banded.estimate(y, prior)
        except NumericalError as e:
            raise e.at_iteration(iteration) from e

    rhs = design.projection @ y + prior.mean / prior.var
    half = prior.half
    if design.decoupled:
        blocks = [slice(0, half), slice(half, 2 * half)]
    else:
        blocks = [slice(0, 2 * half)]

    mean = np.empty_like(rhs)
    var = np.empty_like(rhs)
    for block in blocks:
        precision = design.gram[block, block] + np.diag(1.0 / prior.var[block])
        mean[block], var[block] = _solve_gaussian(precision, rhs[block], iteration)
    return GaussianMessageVec(mean, var)


def _solve_gaussian(
    precision: np.ndarray, rhs: np.ndarray, iteration: int
) -> Tuple[np.ndarray, np.ndarray]:
    """Mean and diagonal covariance of a Gaussian in information form."""
    try:
        factor, lower = linalg.cho_factor(precision)
        inverse, info = linalg.lapack.dpotri(factor, lower=lower)
        if info != 0:
            raise linalg.LinAlgError(f"dpotri failed with info={info}")
    except linalg.LinAlgError:
        raise NumericalError(
            "LE precision matrix is not positive definite",
            condition_number=float(np.linalg.cond(precision)),
            iteration=iteration,
        )
    return linalg.cho_solve((factor, lower), rhs), np.diag(inverse).copy()


def cavity_le_to_nle(
    posterior: GaussianMessageVec,
    prior: GaussianMessageVec,
    previous: Optional[GaussianMessageVec] = None,
) -> Tuple[GaussianMessageVec, int]:
    """Divide the LE posterior by its prior.

    Components with nonpositive or non-finite cavity precision keep the
    previous cavity message, or the posterior when there is none.

    Returns:
        Tuple of (cavity message, number of rejected components)
    """
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        precision = 1.0 / posterior.var - 1.0 / prior.var
        var = 1.0 / precision
        mean = var * (posterior.mean / posterior.var - prior.mean / prior.var)
    accepted = (precision > 0) & np.isfinite(var) & np.isfinite(mean)

    fallback = previous if previous is not None else posterior
    rejects = int(np.count_nonzero(~accepted))
    mean = np.where(accepted, mean, fallback.mean)
    var = np.where(accepted, var, fallback.var)
    return GaussianMessageVec(mean, var), rejects


def cavity_nle_to_le_with_momentum(
    moments: GaussianMessageVec,
    cavity: GaussianMessageVec,
    previous: GaussianMessageVec,
    beta: float,
    domain: MomentumDomain = MomentumDomain.NATURAL,
) -> Tuple[GaussianMessageVec, int]:
    """Extrinsic NLE message, blended with the previous one.

    The extrinsic message is v' = (1/v - 1/sigma^2)^-1 and
    m' = v' (m/v - mu/sigma^2). It is mixed with the previous LE prior with
    weight ``beta`` on the new value:

    - natural: precisions 1/v and information m/v blend linearly, so the
      mean stays consistent with the blended precision;
    - precision: 1/v_A = beta/v' + (1-beta)/v_prev with a linear mean blend;
    - variance: v_A = beta v' + (1-beta) v_prev with a linear mean blend.

    Components with nonpositive v' keep the previous message.

    Returns:
        Tuple of (new LE prior, number of rejected components)
    """
    if not 0.0 < beta <= 1.0:
        raise InvalidArgumentError(f"beta must lie in (0, 1], got {beta}")

    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        precision = 1.0 / moments.var - 1.0 / cavity.var
        extrinsic_var = 1.0 / precision
        extrinsic_mean = extrinsic_var * (
            moments.mean / moments.var - cavity.mean / cavity.var
        )
        accepted = (
            (precision > 0)
            & np.isfinite(extrinsic_var)
            & np.isfinite(extrinsic_mean)
        )

        safe_precision = np.where(accepted, precision, 1.0)
        safe_var = np.where(accepted, extrinsic_var, 1.0)
        safe_mean = np.where(accepted, extrinsic_mean, 0.0)
        previous_precision = 1.0 / previous.var
        if domain == MomentumDomain.NATURAL:
            new_weight = beta * safe_precision
            old_weight = (1.0 - beta) * previous_precision
            blended_precision = new_weight + old_weight
            information = new_weight * safe_mean + old_weight * previous.mean
            blended_var = 1.0 / blended_precision
            blended_mean = information * blended_var
        elif domain == MomentumDomain.PRECISION:
            blended_var = 1.0 / (
                beta * safe_precision + (1.0 - beta) * previous_precision
            )
            blended_mean = beta * safe_mean + (1.0 - beta) * previous.mean
        else:
            blended_var = beta * safe_var + (1.0 - beta) * previous.var
            blended_mean = beta * safe_mean + (1.0 - beta) * previous.mean
        accepted &= np.isfinite(blended_var) & np.isfinite(blended_mean)

    rejects = int(np.count_nonzero(~accepted))
    mean = np.where(accepted, blended_mean, previous.mean)
    var = np.where(accepted, blended_var, previous.var)
    return GaussianMessageVec(mean, var), rejects


def detect(
    channel: RealChannel,
    design: ShorteningDesign,
    config: EpConfig,
    y: np.ndarray,
    constellation: Constellation,
    truth: Optional[np.ndarray] = None,
) -> DetectionResult:
    """Run the EP channel-shortening detector on one received frame.

    Args:
        channel: Channel model the frame went through
        design: Shortening design with memory ``config.nu``
        config: Detector parameters
        y: Real received vector of length 2(N+L)
        constellation: Transmit constellation
        truth: Transmitted symbol indices; enables per-pass SER/SMI

    Returns:
        DetectionResult with N x M PMFs from the last NLE pass

    Raises:
        InvalidArgumentError: If dimensions or memories disagree
        NumericalError: Annotated with the failing iteration
    """
    if design.nu != config.nu:
        raise InvalidArgumentError(
            f"Design memory {design.nu} differs from config nu={config.nu}"
        )
    if design.n_symbols != channel.n_symbols:
        raise InvalidArgumentError("Design and channel block lengths differ")
    if design.symbol_energy != constellation.component_energy:
        raise InvalidArgumentError(
            f"Design assumes symbol energy {design.symbol_energy} per component, "
            f"{constellation} has {constellation.component_energy}"
        )
    if y.shape != (2 * channel.n_outputs,):
        raise InvalidArgumentError(
            f"Observation must have length {2 * channel.n_outputs}, got {y.shape}"
        )

    n = channel.n_symbols
    floor = config.variance_floor
    alphabet = enumerate_transformed_alphabet(constellation, design.taps)
    trellis = Trellis(
        order=constellation.order, memory=design.nu, n_steps=design.n_positions
    )

    diagnostics = EpDiagnostics()
    trajectory: Optional[List[np.ndarray]] = [] if config.keep_trajectory else None
    initial_var = constellation.component_energy * design.ffT_diag
    prior, _ = GaussianMessageVec(np.zeros_like(initial_var), initial_var).floored(
        floor
    )
    previous_cavity: Optional[GaussianMessageVec] = None
    pmfs = np.empty((n, constellation.order))

    for iteration in range(config.iterations + 1):
        last = iteration == config.iterations
        try:
            posterior = le_estimate(
                design, y, prior, iteration, config.mismatched_init, config.le_solver
            )
            posterior, clamps = posterior.floored(floor)
            cavity, rejects = cavity_le_to_nle(posterior, prior, previous_cavity)
            cavity, extra = cavity.floored(floor)
            clamps += extra

            metric = GaussianBranchMetric(cavity, alphabet, n, floor)
            output = run_bcjr(
                trellis,
                metric,
                max_log=config.max_log,
                llr_clip=config.llr_clip,
                keep_branches=not last,
            )
            pmfs = output.symbol_pmfs[:n]

            if not last:
                moments, extra = nle_project(output.branch_pmfs, alphabet, n, floor)
                clamps += extra
                prior, extra = cavity_nle_to_le_with_momentum(
                    moments, cavity, prior, config.beta, config.momentum
                )
                rejects += extra
                prior, extra = prior.floored(floor)
                clamps += extra
                previous_cavity = cavity
        except NumericalError as e:
            raise e.at_iteration(iteration) from e

        diagnostics.neg_var_rejects.append(rejects)
        diagnostics.clamp_events.append(clamps)
        if truth is not None:
            diagnostics.ser.append(ser(pmfs, truth))
            diagnostics.smi.append(smi(pmfs, truth, constellation))
        if trajectory is not None:
            trajectory.append(pmfs.copy())
        if rejects:
            logger.debug(
                f"Iteration {iteration}: {rejects} negative-variance updates ignored"
            )

    return DetectionResult(pmfs=pmfs, diagnostics=diagnostics, trajectory=trajectory)


def detect_lmmse(
    channel: RealChannel,
    y: np.ndarray,
    constellation: Constellation,
    llr_clip: float = DEFAULT_LLR_CLIP,
    variance_floor: float = DEFAULT_VARIANCE_FLOOR,
) -> DetectionResult:
    """LMMSE filter followed by the symbol-wise Gaussian demapper."""
    config = EpConfig(
        nu=0, iterations=0, beta=1.0, llr_clip=llr_clip, variance_floor=variance_floor
    )
    identity = design_filter(
        channel,
        0,
        ShorteningMode.identity(),
        symbol_energy=constellation.component_energy,
    )
    return detect(channel, identity, config, y, constellation)


def detect_bcjr(
    channel: RealChannel,
    y: np.ndarray,
    constellation: Constellation,
    max_log: bool = False,
    llr_clip: float = DEFAULT_LLR_CLIP,
    variance_floor: float = DEFAULT_VARIANCE_FLOOR,
) -> DetectionResult:
    """Full-memory BCJR on the received samples with the exact channel metric."""
    alphabet = enumerate_transformed_alphabet(constellation, channel.cir.taps)
    trellis = Trellis(
        order=constellation.order, memory=channel.memory, n_steps=channel.n_outputs
    )
    observation = GaussianMessageVec(y, np.full(y.shape, channel.n0))
    metric = GaussianBranchMetric(
        observation, alphabet, channel.n_symbols, variance_floor
    )
    output = run_bcjr(
        trellis, metric, max_log=max_log, llr_clip=llr_clip, keep_branches=False
    )
    diagnostics = EpDiagnostics(neg_var_rejects=[0], clamp_events=[metric.clamp_events])
    return DetectionResult(
        pmfs=output.symbol_pmfs[: channel.n_symbols], diagnostics=diagnostics
    )
