"""Configuration defaults and config-file loading for epshort."""

import json
from pathlib import Path
from typing import Any, Dict, Mapping, Optional

from .errors import InvalidArgumentError

# Detector constants used in the reference experiments.
DEFAULT_VARIANCE_FLOOR = 1e-7
DEFAULT_LLR_CLIP = 16.0
DEFAULT_BLOCK_LENGTH = 512
DEFAULT_PRUNE_THRESHOLD_DB = -20.0
PRUNE_BOUNDARY_TOLERANCE = 1e-9

BETA_GRID = [0.05, 0.1, 0.2, 0.4, 0.6]
PRACTICAL_BETA = 0.4
PRACTICAL_ITERATIONS = 4
OPTIMAL_BETA_ITERATIONS = 16

# Resource and conditioning caps.
MAX_ALPHABET_SIZE = 2**20
PSEUDO_INVERSE_CONDITION_CAP = 1e12

RESULTS_SCHEMA_VERSION = "epshort-results/1"
RESULTS_COLUMNS = [
    "snr_db",
    "nu",
    "beta",
    "iters",
    "frames",
    "ser",
    "smi_final",
    "smi_best",
    "n_c",
    "neg_var_rejects",
    "clamp_events",
    "seed",
    "status",
]


def load_config_file(config_path: str) -> Dict[str, Any]:
    """Load a key-value sweep configuration file.

    The file holds a single JSON object whose keys are sweep option names,
    written either with dashes (as on the command line) or underscores.

    Args:
        config_path: Path to the JSON file

    Returns:
        Mapping of option name (underscored) to value

    Raises:
        InvalidArgumentError: If the file is missing, unreadable or not an object
    """
    path = Path(config_path)
    if not path.exists():
        raise InvalidArgumentError(f"Config file '{path}' not found")

    try:
        with open(path, "r") as f:
            data = json.load(f)
    except (json.JSONDecodeError, OSError) as e:
        raise InvalidArgumentError(f"Config file '{path}' is not valid JSON: {e}")

    if not isinstance(data, dict):
        raise InvalidArgumentError(
            f"Config file '{path}' must contain a JSON object of key-value pairs"
        )

    return {str(key).replace("-", "_"): value for key, value in data.items()}


def merge_overrides(
    file_values: Mapping[str, Any],
    cli_values: Mapping[str, Any],
    explicit: Optional[set] = None,
) -> Dict[str, Any]:
    """Merge config-file values with command line values.

    Explicit command line flags win over the file; the file wins over
    command line defaults.

    Args:
        file_values: Values loaded from the config file
        cli_values: All values click parsed, defaults included
        explicit: Names of parameters the user actually passed on the CLI

    Returns:
        Merged option mapping
    """
    explicit = explicit or set()
    merged = dict(cli_values)
    for key, value in file_values.items():
        if key in explicit:
            continue
        merged[key] = value
    return merged
