"""Monte-Carlo sweep over SNR, target memory and momentum."""

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Callable, Iterable, List, Optional, Set, Tuple

import numpy as np
import pandas as pd

from .channel import RealChannel, build_real_channel, frame_seed, load_cir, transmit
from .config import RESULTS_COLUMNS, RESULTS_SCHEMA_VERSION
from .detector import detect, detect_bcjr
from .errors import EpShortError, InvalidArgumentError
from .metrics import count_complexity, full_bcjr_complexity, ser, smi
from .models import DetectorKind, EpConfig, RunRecord, SweepConfig
from .modulation import Constellation, make_constellation, parse_modulation
from .shorten import ShorteningDesign, ShorteningMode, design

logger = logging.getLogger(__name__)

CellKey = Tuple[float, int, float, int]


def parse_grid(spec: Any, cast: Callable[[Any], Any] = float) -> List[Any]:
    """Parse a grid given as ``start:stop:step`` (inclusive), a comma list or a value.

    Lists and scalars (as read from a config file) are accepted as well.

    Raises:
        InvalidArgumentError: If the grid is malformed or empty
    """
    try:
        if isinstance(spec, (list, tuple)):
            values = [cast(v) for v in spec]
        elif isinstance(spec, (int, float)):
            values = [cast(spec)]
        elif ":" in str(spec):
            parts = [float(part) for part in str(spec).split(":")]
            if len(parts) != 3:
                raise ValueError("expected start:stop:step")
            start, stop, step = parts
            if step <= 0 or stop < start:
                raise ValueError("step must be positive and stop >= start")
            count = int(math.floor((stop - start) / step + 1e-9)) + 1
            values = [cast(round(start + i * step, 10)) for i in range(count)]
        else:
            values = [cast(part) for part in str(spec).split(",") if part.strip()]
    except (TypeError, ValueError) as e:
        raise InvalidArgumentError(f"Invalid grid '{spec}': {e}")

    if not values:
        raise InvalidArgumentError(f"Grid '{spec}' is empty")
    return values


def parse_int(value: Any) -> int:
    """Integer grid entry; accepts ``2`` and ``2.0`` but not ``2.5``."""
    number = float(value)
    if not number.is_integer():
        raise ValueError(f"{value} is not an integer")
    return int(number)


def cell_key(snr_db: float, nu: int, beta: float, seed: int) -> CellKey:
    return (round(float(snr_db), 6), int(nu), round(float(beta), 6), int(seed))


def read_results(path: Path) -> pd.DataFrame:
    """Load a results CSV written by :class:`ResultsWriter`.

    Raises:
        InvalidArgumentError: If the schema line or columns do not match
    """
    path = Path(path)
    with open(path, "r") as f:
        first = f.readline().strip()
    if first != f"# {RESULTS_SCHEMA_VERSION}":
        raise InvalidArgumentError(
            f"'{path}' is not a {RESULTS_SCHEMA_VERSION} results file "
            f"(first line: {first!r})"
        )
    frame = pd.read_csv(path, comment="#")
    if list(frame.columns) != RESULTS_COLUMNS:
        raise InvalidArgumentError(f"'{path}' has columns {list(frame.columns)}")
    return frame


class ResultsWriter:
    """Single writer appending one CSV row per finished cell."""

    def __init__(self, path: Path, append: bool = False):
        self.path = Path(path)
        self.completed: Set[CellKey] = set()

        if append and self.path.exists():
            existing = read_results(self.path)
            self.completed = {
                cell_key(row.snr_db, row.nu, row.beta, row.seed)
                for row in existing.itertuples(index=False)
            }
            logger.info(
                f"Resuming {self.path}: {len(self.completed)} cells already done"
            )
        else:
            self.path.parent.mkdir(parents=True, exist_ok=True)
            header = f"# {RESULTS_SCHEMA_VERSION}\n" + ",".join(RESULTS_COLUMNS) + "\n"
            self.path.write_text(header)

    def is_done(self, key: CellKey) -> bool:
        return key in self.completed

    def write(self, record: RunRecord) -> None:
        row = pd.DataFrame([record.to_row()], columns=RESULTS_COLUMNS)
        with open(self.path, "a", newline="") as f:
            row.to_csv(f, header=False, index=False, float_format="%.10g")
        self.completed.add(cell_key(record.snr_db, record.nu, record.beta, record.seed))


@dataclass
class FrameStats:
    """Per-pass SER and SMI of one frame plus its diagnostic counters."""

    ser: List[float]
    smi: List[float]
    neg_var_rejects: int
    clamp_events: int


def run_frame(
    channel: RealChannel,
    constellation: Constellation,
    master_seed: int,
    frame_index: int,
    ep_config: Optional[EpConfig] = None,
    shortening: Optional[ShorteningDesign] = None,
) -> FrameStats:
    """Transmit and detect one frame; the full BCJR runs when no design is given.

    The BCJR baseline takes max-log, LLR clip and variance floor from
    ``ep_config`` when one is given.
    """
    frame = transmit(channel, constellation, frame_seed(master_seed, frame_index))

    if shortening is None:
        options = ep_config or EpConfig()
        result = detect_bcjr(
            channel,
            frame.y,
            constellation,
            max_log=options.max_log,
            llr_clip=options.llr_clip,
            variance_floor=options.variance_floor,
        )
        return FrameStats(
            ser=[ser(result.pmfs, frame.indices)],
            smi=[smi(result.pmfs, frame.indices, constellation)],
            neg_var_rejects=0,
            clamp_events=result.diagnostics.total_clamps,
        )

    result = detect(
        channel, shortening, ep_config, frame.y, constellation, truth=frame.indices
    )
    diagnostics = result.diagnostics
    return FrameStats(
        ser=diagnostics.ser,
        smi=diagnostics.smi,
        neg_var_rejects=diagnostics.total_rejects,
        clamp_events=diagnostics.total_clamps,
    )


def aggregate(stats: Iterable[FrameStats]) -> Tuple[float, float, float, int, int, int]:
    """Reduce frames in index order.

    Returns:
        Tuple of (ser, smi_final, smi_best, rejects, clamps, frames)
    """
    stats = list(stats)
    ser_per_pass = np.mean([s.ser for s in stats], axis=0)
    smi_per_pass = np.mean([s.smi for s in stats], axis=0)
    return (
        float(ser_per_pass[-1]),
        float(smi_per_pass[-1]),
        float(np.max(smi_per_pass)),
        sum(s.neg_var_rejects for s in stats),
        sum(s.clamp_events for s in stats),
        len(stats),
    )


def _run_frames(
    worker: Callable[[int], FrameStats], frames: int, threads: int
) -> List[FrameStats]:
    if threads <= 1:
        return [worker(index) for index in range(frames)]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(worker, range(frames)))


def run_cell(
    config: SweepConfig,
    channel: RealChannel,
    constellation: Constellation,
    nu: int,
    beta: float,
    shortening: Optional[ShorteningDesign],
) -> RunRecord:
    """Simulate all frames of one (snr, nu, beta) cell."""
    # The BCJR cell records beta 0 but only reads the trellis options.
    ep_config = config.ep_config(nu, beta if shortening is not None else 1.0)
    iters = 0 if shortening is None else config.iters

    def worker(index: int) -> FrameStats:
        return run_frame(
            channel, constellation, config.seed, index, ep_config, shortening
        )

    try:
        stats = _run_frames(worker, config.frames, config.threads)
    except EpShortError as e:
        logger.warning(f"Cell snr={channel.esn0_db} nu={nu} beta={beta} failed: {e}")
        return RunRecord.failed(channel.esn0_db, nu, beta, iters, config.seed, str(e))

    ser_value, smi_final, smi_best, rejects, clamps, frames = aggregate(stats)
    if shortening is None:
        n_c = full_bcjr_complexity(channel, constellation).n_c
    else:
        n_c = count_complexity(ep_config, channel, shortening, constellation).n_c

    return RunRecord(
        snr_db=channel.esn0_db,
        nu=nu,
        beta=beta,
        iters=iters,
        frames=frames,
        ser=ser_value,
        smi_final=smi_final,
        smi_best=smi_best,
        n_c=n_c,
        neg_var_rejects=rejects,
        clamp_events=clamps,
        seed=config.seed,
    )


def run_sweep(config: SweepConfig) -> List[RunRecord]:
    """Run every (snr, nu, beta) cell and append its row to the results CSV.

    Cells already present in the output are skipped with ``append``. A cell
    whose detection fails is recorded with an ``error: ...`` status.

    Returns:
        Records computed by this run, in grid order

    Raises:
        InvalidArgumentError: If the channel, modulation or mode is invalid
    """
    cir = load_cir(config.channel, config.prune_db)
    constellation = make_constellation(*parse_modulation(config.modulation))
    mode = ShorteningMode.parse(config.shorten_mode)
    writer = ResultsWriter(config.out, append=config.append)

    logger.info(
        f"Sweep: {config.channel} (L={cir.memory}), {constellation}, "
        f"N={config.n_symbols}, "
        f"{config.frames} frames per cell, detector={config.detector.value}"
    )

    records: List[RunRecord] = []
    for snr_db in config.snr_db:
        channel = build_real_channel(cir, config.n_symbols, snr_db)

        if config.detector == DetectorKind.BCJR:
            if writer.is_done(cell_key(snr_db, cir.memory, 0.0, config.seed)):
                continue
            record = run_cell(config, channel, constellation, cir.memory, 0.0, None)
            writer.write(record)
            records.append(record)
            continue

        for nu in config.nu:
            pending = [
                beta
                for beta in config.beta
                if not writer.is_done(cell_key(snr_db, nu, beta, config.seed))
            ]
            if not pending:
                continue

            try:
                shortening = design(
                    channel, nu, mode, symbol_energy=constellation.component_energy
                )
            except EpShortError as e:
                logger.warning(f"Design failed for snr={snr_db} nu={nu}: {e}")
                for beta in pending:
                    record = RunRecord.failed(
                        snr_db, nu, beta, config.iters, config.seed, str(e)
                    )
                    writer.write(record)
                    records.append(record)
                continue

            for beta in pending:
                record = run_cell(config, channel, constellation, nu, beta, shortening)
                logger.info(
                    f"snr={snr_db} dB nu={nu} beta={beta}: SER={record.ser:.4g} "
                    f"SMI={record.smi_final:.4f} [{record.status}]"
                )
                writer.write(record)
                records.append(record)

    return records
