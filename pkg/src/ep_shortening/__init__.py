"""epshort - EP detection with channel shortening for ISI channels."""

__version__ = "0.1.0"

from .channel import (
    Cir,
    Frame,
    RealChannel,
    build_real_channel,
    load_cir,
    prune_taps,
    transmit,
)
from .detector import DetectionResult, EpDiagnostics, detect, detect_bcjr, detect_lmmse
from .errors import (
    EpShortError,
    InvalidArgumentError,
    NumericalError,
    ResourceLimitError,
)
from .messages import GaussianMessageVec
from .models import (
    ComplexityLedger,
    EpConfig,
    LeSolver,
    MomentumDomain,
    RunRecord,
    SweepConfig,
)
from .modulation import Constellation, make_constellation
from .shorten import ShorteningDesign, ShorteningMode, design
from .sweep import run_sweep

__all__ = [
    "Cir",
    "Frame",
    "RealChannel",
    "build_real_channel",
    "load_cir",
    "prune_taps",
    "transmit",
    "DetectionResult",
    "EpDiagnostics",
    "detect",
    "detect_bcjr",
    "detect_lmmse",
    "EpShortError",
    "InvalidArgumentError",
    "NumericalError",
    "ResourceLimitError",
    "GaussianMessageVec",
    "ComplexityLedger",
    "EpConfig",
    "LeSolver",
    "MomentumDomain",
    "RunRecord",
    "SweepConfig",
    "Constellation",
    "make_constellation",
    "ShorteningDesign",
    "ShorteningMode",
    "design",
    "run_sweep",
]
