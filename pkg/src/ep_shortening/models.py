"""Data models for epshort."""

from enum import Enum
from pathlib import Path
from typing import Any, Dict, List, Optional

from pydantic import BaseModel, ConfigDict, Field, field_validator

from .config import (
    DEFAULT_BLOCK_LENGTH,
    DEFAULT_LLR_CLIP,
    DEFAULT_VARIANCE_FLOOR,
    PRACTICAL_BETA,
    PRACTICAL_ITERATIONS,
)


class ModulationName(str, Enum):
    """Supported constellation families."""

    PAM = "pam"
    QAM = "qam"


class ShorteningModeKind(str, Enum):
    """How the target response of the shortening filter is chosen."""

    IDENTITY = "identity"
    MMSE_MIN_EIG = "mmse-min-eig"
    FIXED_TAPS = "taps"
    FULL = "full"


class DetectorKind(str, Enum):
    """Detector run by a sweep."""

    EP = "ep"
    BCJR = "bcjr"


class MomentumDomain(str, Enum):
    """Parameters blended by the momentum step on the NLE to LE message."""

    NATURAL = "natural"
    PRECISION = "precision"
    VARIANCE = "variance"


class LeSolver(str, Enum):
    """Factorization used by the per-iteration LE solve."""

    DENSE = "dense"
    BANDED = "banded"


class EpConfig(BaseModel):
    """Parameters of the EP channel-shortening detector."""

    model_config = ConfigDict(frozen=True)

    nu: int = Field(default=0, ge=0)
    iterations: int = Field(default=PRACTICAL_ITERATIONS, ge=0)
    beta: float = Field(default=PRACTICAL_BETA, gt=0.0, le=1.0)
    variance_floor: float = Field(default=DEFAULT_VARIANCE_FLOOR, gt=0.0)
    llr_clip: float = Field(default=DEFAULT_LLR_CLIP, gt=0.0)
    mismatched_init: bool = True
    max_log: bool = False
    momentum: MomentumDomain = MomentumDomain.NATURAL
    le_solver: LeSolver = LeSolver.DENSE
    keep_trajectory: bool = False


class ComplexityLedger(BaseModel):
    """Operation counts per detected symbol.

    The complexity number weighs additions by 1 and multiplications and
    Jacobian logarithms by 2.
    """

    additions: float = 0.0
    multiplications: float = 0.0
    jacobian_logs: float = 0.0

    @property
    def n_c(self) -> float:
        """Weighted complexity number."""
        return self.additions + 2 * self.multiplications + 2 * self.jacobian_logs

    def __add__(self, other: "ComplexityLedger") -> "ComplexityLedger":
        return ComplexityLedger(
            additions=self.additions + other.additions,
            multiplications=self.multiplications + other.multiplications,
            jacobian_logs=self.jacobian_logs + other.jacobian_logs,
        )

    def scaled(self, factor: float) -> "ComplexityLedger":
        """Return the ledger with every count multiplied by ``factor``."""
        return ComplexityLedger(
            additions=self.additions * factor,
            multiplications=self.multiplications * factor,
            jacobian_logs=self.jacobian_logs * factor,
        )


class SweepConfig(BaseModel):
    """Monte-Carlo sweep configuration."""

    channel: str = "proakis-c"
    modulation: str = "pam8"
    n_symbols: int = Field(default=DEFAULT_BLOCK_LENGTH, ge=1)
    snr_db: List[float] = Field(default_factory=lambda: [30.0])
    nu: List[int] = Field(default_factory=lambda: [0])
    beta: List[float] = Field(default_factory=lambda: [PRACTICAL_BETA])
    iters: int = Field(default=PRACTICAL_ITERATIONS, ge=0)
    frames: int = Field(default=100, ge=1)
    seed: int = Field(default=0, ge=0)
    out: Path = Path("results.csv")
    detector: DetectorKind = DetectorKind.EP
    shorten_mode: str = ShorteningModeKind.MMSE_MIN_EIG.value
    prune_db: Optional[float] = None
    max_log: bool = False
    mismatched_init: bool = True
    variance_floor: float = Field(default=DEFAULT_VARIANCE_FLOOR, gt=0.0)
    llr_clip: float = Field(default=DEFAULT_LLR_CLIP, gt=0.0)
    momentum: MomentumDomain = MomentumDomain.NATURAL
    le_solver: LeSolver = LeSolver.DENSE
    threads: int = Field(default=1, ge=1)
    append: bool = False

    @field_validator("snr_db", "nu", "beta")
    @classmethod
    def _grid_not_empty(cls, value: List[Any]) -> List[Any]:
        if not value:
            raise ValueError("grid must not be empty")
        return value

    @field_validator("nu")
    @classmethod
    def _nu_nonnegative(cls, value: List[int]) -> List[int]:
        if any(v < 0 for v in value):
            raise ValueError("memory nu must be nonnegative")
        return value

    @field_validator("beta")
    @classmethod
    def _beta_in_range(cls, value: List[float]) -> List[float]:
        if any(not 0.0 < b <= 1.0 for b in value):
            raise ValueError("beta must lie in (0, 1]")
        return value

    def ep_config(self, nu: int, beta: float) -> EpConfig:
        """Detector configuration for one (nu, beta) cell."""
        return EpConfig(
            nu=nu,
            iterations=self.iters,
            beta=beta,
            variance_floor=self.variance_floor,
            llr_clip=self.llr_clip,
            mismatched_init=self.mismatched_init,
            max_log=self.max_log,
            momentum=self.momentum,
            le_solver=self.le_solver,
        )


class RunRecord(BaseModel):
    """Aggregated result of one (snr, nu, beta) sweep cell."""

    snr_db: float
    nu: int
    beta: float
    iters: int
    frames: int
    ser: float = Field(ge=0.0, le=1.0)
    smi_final: float = Field(ge=0.0)
    smi_best: float = Field(ge=0.0)
    n_c: float
    neg_var_rejects: int = Field(default=0, ge=0)
    clamp_events: int = Field(default=0, ge=0)
    seed: int
    status: str = "ok"

    @classmethod
    def failed(
        cls, snr_db: float, nu: int, beta: float, iters: int, seed: int, reason: str
    ) -> "RunRecord":
        """Record for a cell whose detection raised a numerical failure."""
        return cls(
            snr_db=snr_db,
            nu=nu,
            beta=beta,
            iters=iters,
            frames=0,
            ser=1.0,
            smi_final=0.0,
            smi_best=0.0,
            n_c=0.0,
            seed=seed,
            status=f"error: {reason}",
        )

    def to_row(self) -> Dict[str, Any]:
        """CSV row in schema column order."""
        return self.model_dump()
