"""Command line interface for epshort."""

import json
import logging
from typing import Any, Dict, Optional

import click
import numpy as np
from click.core import ParameterSource
from pydantic import ValidationError
from rich.console import Console
from rich.logging import RichHandler
from rich.markup import escape
from rich.panel import Panel
from rich.table import Table

from .channel import build_real_channel, load_cir
from .config import (
    DEFAULT_BLOCK_LENGTH,
    DEFAULT_LLR_CLIP,
    DEFAULT_VARIANCE_FLOOR,
    PRACTICAL_BETA,
    PRACTICAL_ITERATIONS,
    load_config_file,
    merge_overrides,
)
from .errors import EpShortError, InvalidArgumentError
from .metrics import complexity_trajectory, full_bcjr_complexity
from .models import EpConfig, LeSolver, MomentumDomain, SweepConfig
from .modulation import make_constellation, parse_modulation
from .shorten import ShorteningMode, design
from .sweep import parse_grid, parse_int, run_sweep

console = Console()
err_console = Console(stderr=True)

# Command line spellings accepted as config-file keys.
CONFIG_ALIASES = {"mod": "modulation", "snr": "snr_db"}


def setup_logging(verbosity: int) -> None:
    """Route package logs through rich on stderr."""
    level = logging.WARNING
    if verbosity == 1:
        level = logging.INFO
    elif verbosity > 1:
        level = logging.DEBUG

    handler = RichHandler(console=err_console, show_path=False, show_time=False)
    handler.setFormatter(logging.Formatter("%(message)s"))
    package_logger = logging.getLogger("ep_shortening")
    package_logger.handlers = [handler]
    package_logger.setLevel(level)
    package_logger.propagate = False


def format_taps(taps: np.ndarray) -> str:
    if np.all(np.imag(taps) == 0):
        return "[" + ", ".join(f"{t.real:.4f}" for t in taps) + "]"
    return "[" + ", ".join(f"{t.real:.4f}{t.imag:+.4f}j" for t in taps) + "]"


@click.group()
@click.version_option(package_name="epshort")
@click.option(
    "-v", "--verbose", count=True, help="Log progress (-v) or debug detail (-vv)"
)
def main(verbose: int) -> None:
    """epshort - EP detection with channel shortening for ISI channels."""
    setup_logging(verbose)


def build_sweep_config(
    ctx: click.Context, config_path: Optional[str], options: Dict[str, Any]
) -> SweepConfig:
    """Merge the config file with command line options and validate.

    Raises:
        InvalidArgumentError: On unknown config keys or malformed grids
        ValidationError: If a value is out of range
    """
    file_values: Dict[str, Any] = {}
    if config_path:
        raw = load_config_file(config_path)
        file_values = {
            CONFIG_ALIASES.get(key, key): value for key, value in raw.items()
        }
        known = set(SweepConfig.model_fields) | {"no_mismatched_init"}
        unknown = sorted(set(file_values) - known)
        if unknown:
            raise InvalidArgumentError(
                f"Unknown keys in config file '{config_path}': {', '.join(unknown)}"
            )

    explicit = {
        name
        for name in options
        if ctx.get_parameter_source(name) == ParameterSource.COMMANDLINE
    }
    values = merge_overrides(file_values, options, explicit)

    no_mismatched = bool(values.pop("no_mismatched_init", False))
    if "mismatched_init" not in file_values or "no_mismatched_init" in explicit:
        values["mismatched_init"] = not no_mismatched

    values["snr_db"] = parse_grid(values["snr_db"], float)
    values["nu"] = parse_grid(values["nu"], parse_int)
    values["beta"] = parse_grid(values["beta"], float)
    return SweepConfig(**values)


@main.command()
@click.option(
    "--config", "config_path", type=click.Path(), help="JSON file of sweep options"
)
@click.option("--channel", default="proakis-c", help="Preset name or CIR file")
@click.option(
    "--mod", "modulation", default="pam8", help="Constellation, e.g. pam8 or qam16"
)
@click.option(
    "--n-symbols", "-N", type=int, default=DEFAULT_BLOCK_LENGTH, help="Block length"
)
@click.option(
    "--snr", "snr_db", default="30", help="Es/N0 grid in dB: a:b:s, list or value"
)
@click.option("--nu", default="0", help="Target memory list")
@click.option("--beta", default=str(PRACTICAL_BETA), help="Momentum list")
@click.option(
    "--iters", type=int, default=PRACTICAL_ITERATIONS, help="EP iterations N_It"
)
@click.option("--frames", type=int, default=100, help="Frames per cell")
@click.option("--seed", type=int, default=0, help="Master seed")
@click.option("--out", type=click.Path(), default="results.csv", help="Results CSV")
@click.option(
    "--detector",
    type=click.Choice(["ep", "bcjr"]),
    default="ep",
    help="EP or full BCJR",
)
@click.option(
    "--shorten-mode",
    default="mmse-min-eig",
    help="identity, mmse-min-eig, full or taps:<file>",
)
@click.option("--prune-db", type=float, default=None, help="Prune weak CIR taps (dB)")
@click.option("--max-log", is_flag=True, help="Use max-log instead of exact max*")
@click.option(
    "--no-mismatched-init", is_flag=True, help="Diagonal prior in the first LE"
)
@click.option("--variance-floor", type=float, default=DEFAULT_VARIANCE_FLOOR)
@click.option("--llr-clip", type=float, default=DEFAULT_LLR_CLIP)
@click.option(
    "--momentum",
    type=click.Choice([domain.value for domain in MomentumDomain]),
    default=MomentumDomain.NATURAL.value,
    help="Parameters blended by the momentum step",
)
@click.option(
    "--le-solver",
    type=click.Choice([solver.value for solver in LeSolver]),
    default=LeSolver.DENSE.value,
    help="Dense or banded LE factorization",
)
@click.option("--threads", type=int, default=1, help="Worker threads per cell")
@click.option("--append", is_flag=True, help="Resume into an existing results file")
@click.option("--json", "as_json", is_flag=True, help="Print records as JSON")
@click.pass_context
def sweep(
    ctx: click.Context, config_path: Optional[str], as_json: bool, **options: Any
) -> None:
    """Run a Monte-Carlo sweep and write one CSV row per (snr, nu, beta) cell."""
    try:
        config = build_sweep_config(ctx, config_path, options)
        records = run_sweep(config)
    except (EpShortError, ValidationError, OSError) as e:
        console.print(f"[red]Error: {escape(str(e))}[/red]")
        raise click.Abort()

    if as_json:
        click.echo(json.dumps([record.model_dump() for record in records], indent=2))
        return

    table = Table(title=f"Sweep results ({config.out})")
    table.add_column("Es/N0 (dB)", justify="right")
    table.add_column("nu", justify="right")
    table.add_column("beta", justify="right")
    table.add_column("SER", justify="right")
    table.add_column("SMI final", justify="right")
    table.add_column("SMI best", justify="right")
    table.add_column("N_C", justify="right")
    table.add_column("Status")

    for record in records:
        status = "[green]ok[/green]"
        if record.status != "ok":
            status = f"[red]{escape(record.status)}[/red]"
        table.add_row(
            f"{record.snr_db:g}",
            str(record.nu),
            f"{record.beta:g}",
            f"{record.ser:.3e}",
            f"{record.smi_final:.4f}",
            f"{record.smi_best:.4f}",
            f"{record.n_c:,.0f}",
            status,
        )

    console.print(table)
    if not records:
        console.print("[yellow]All cells already present, nothing to do[/yellow]")


@main.group()
def channel() -> None:
    """Inspect channel impulse responses."""
    pass


@channel.command("show")
@click.argument("spec")
@click.option("--prune-db", type=float, default=None, help="Prune weak taps (dB)")
@click.option("--json", "as_json", is_flag=True, help="Output as JSON")
def channel_show(spec: str, prune_db: Optional[float], as_json: bool) -> None:
    """Show the taps of a preset or CIR file."""
    try:
        cir = load_cir(spec, prune_db)
    except EpShortError as e:
        console.print(f"[red]Error: {escape(str(e))}[/red]")
        raise click.Abort()

    gains = cir.gains_db
    if as_json:
        taps = [[tap.real, tap.imag] for tap in cir.taps.tolist()]
        click.echo(
            json.dumps({"channel": spec, "memory": cir.memory, "taps": taps}, indent=2)
        )
        return

    table = Table(title=f"{spec} (L={cir.memory})")
    table.add_column("Tap", justify="right")
    table.add_column("Re", justify="right")
    table.add_column("Im", justify="right")
    table.add_column("|h|^2", justify="right")
    table.add_column("Gain (dB)", justify="right")
    for index, tap in enumerate(cir.taps):
        table.add_row(
            str(index),
            f"{tap.real:.4f}",
            f"{tap.imag:.4f}",
            f"{abs(tap) ** 2:.4f}",
            f"{gains[index]:.1f}",
        )
    console.print(table)


@main.command("design")
@click.option(
    "--channel", "channel_spec", default="proakis-c", help="Preset name or CIR file"
)
@click.option("--mod", "modulation", default="pam8", help="Constellation")
@click.option("--snr", "snr_db", type=float, default=30.0, help="Es/N0 in dB")
@click.option(
    "--n-symbols", "-N", type=int, default=DEFAULT_BLOCK_LENGTH, help="Block length"
)
@click.option("--nu", default="0,1,2,3", help="Target memory list")
@click.option("--shorten-mode", default="mmse-min-eig", help="Target construction")
def design_command(
    channel_spec: str,
    modulation: str,
    snr_db: float,
    n_symbols: int,
    nu: str,
    shorten_mode: str,
) -> None:
    """Print target taps and steady-state residual MSE per target memory."""
    try:
        cir = load_cir(channel_spec)
        constellation = make_constellation(*parse_modulation(modulation))
        mode = ShorteningMode.parse(shorten_mode)
        channel_model = build_real_channel(cir, n_symbols, snr_db)
        designs = [
            design(
                channel_model, value, mode, symbol_energy=constellation.component_energy
            )
            for value in parse_grid(nu, parse_int)
        ]
    except EpShortError as e:
        console.print(f"[red]Error: {escape(str(e))}[/red]")
        raise click.Abort()

    table = Table(title=f"Target responses, {channel_spec} at {snr_db:g} dB ({mode})")
    table.add_column("nu", justify="right")
    table.add_column("Target taps")
    table.add_column("Residual MSE", justify="right")
    table.add_column("cond(F^T F)", justify="right")
    for item in designs:
        table.add_row(
            str(item.nu),
            format_taps(item.taps),
            f"{item.residual_mse:.4e}",
            f"{item.condition_number:.2f}",
        )
    console.print(table)


@main.command()
@click.option(
    "--channel", "channel_spec", default="proakis-c", help="Preset name or CIR file"
)
@click.option("--mod", "modulation", default="pam8", help="Constellation")
@click.option("--nu", default="0,1,2,3", help="Target memory list")
@click.option("--iters", type=int, default=16, help="EP iterations N_It")
@click.option(
    "--snr", "snr_db", type=float, default=30.0, help="Es/N0 used for the design"
)
def complexity(
    channel_spec: str, modulation: str, nu: str, iters: int, snr_db: float
) -> None:
    """Print the complexity number N_C after each NLE pass."""
    try:
        cir = load_cir(channel_spec)
        constellation = make_constellation(*parse_modulation(modulation))
        nus = parse_grid(nu, parse_int)
        channel_model = build_real_channel(cir, max(4 * cir.memory + 1, 16), snr_db)
        rows = []
        for value in nus:
            shortening = design(
                channel_model,
                value,
                ShorteningMode.mmse_min_eig(),
                symbol_energy=constellation.component_energy,
            )
            trajectories = [
                complexity_trajectory(
                    EpConfig(nu=value, iterations=iters, mismatched_init=mismatched),
                    channel_model,
                    shortening,
                    constellation,
                )
                for mismatched in (True, False)
            ]
            rows.append((value, trajectories))
    except (EpShortError, ValidationError) as e:
        console.print(f"[red]Error: {escape(str(e))}[/red]")
        raise click.Abort()

    table = Table(
        title=f"Complexity number N_C per symbol, {channel_spec}, {constellation}"
    )
    table.add_column("nu", justify="right")
    table.add_column("Pass", justify="right")
    table.add_column("N_C (mismatched init)", justify="right")
    table.add_column("N_C (diagonal init)", justify="right")
    for value, (mismatched, diagonal) in rows:
        for index, (first, second) in enumerate(zip(mismatched, diagonal)):
            table.add_row(
                str(value), str(index), f"{first.n_c:,.0f}", f"{second.n_c:,.0f}"
            )
    console.print(table)

    reference = full_bcjr_complexity(channel_model, constellation)
    console.print(
        Panel.fit(
            f"[bold]Full BCJR:[/bold] {reference.n_c:,.0f} per symbol "
            f"({constellation.order}^{cir.memory + 1} branches)",
            title="Reference",
            border_style="blue",
        )
    )


if __name__ == "__main__":
    main()
