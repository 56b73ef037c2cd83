"""
Result writers: CSV tables, JSON reports and run metadata.

Floats in CSV are written with 17 significant digits; JSON keeps Python's
shortest round-trip representation. Both are lossless, and neither carries
timestamps, so identical runs produce identical bytes.
"""
import hashlib
import json
import math
import platform
from pathlib import Path
from typing import Any, Dict

import numpy as np
import pandas as pd

import ezmfg
from ezmfg.common.logger import setup_logger

logger = setup_logger('output')

FLOAT_FORMAT = "%.17g"


def to_jsonable(obj: Any) -> Any:
    """Convert numpy scalars/arrays to plain Python; non-finite floats become None."""
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return to_jsonable(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        value = float(obj)
        return value if math.isfinite(value) else None
    return obj


def dumps(obj: Any) -> str:
    return json.dumps(to_jsonable(obj), sort_keys=True, indent=2, allow_nan=False) + "\n"


def write_json(path: Path, obj: Any) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(dumps(obj), encoding="utf-8")
    return path


def write_csv(path: Path, frame: pd.DataFrame) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(path, index=False, float_format=FLOAT_FORMAT, lineterminator="\n")
    return path


def _at_nodes(cells: np.ndarray) -> np.ndarray:
    """Extend cell values to nodes; the node T repeats the last cell."""
    return np.concatenate([cells, cells[..., -1:]], axis=-1)


def equilibrium_frame(eq) -> pd.DataFrame:
    """One row per (grid node, type) of a mean-field equilibrium."""
    grid = eq.grid
    A, B = _at_nodes(eq.riccati.A), _at_nodes(eq.riccati.B)
    pi, Z0 = eq.pi_star, eq.Z0
    rows = [
        {
            "t": float(grid[j]),
            "type_id": k,
            "pi_star": pi[k, j],
            "c_star": eq.c_star[k, j],
            "Z0": Z0[k, j],
            "A": A[k, j],
            "B": B[k, j],
            "Y_tilde": eq.Y_tilde[k, j],
        }
        for j in range(len(grid))
        for k in range(eq.population.n_types)
    ]
    return pd.DataFrame(rows, columns=["t", "type_id", "pi_star", "c_star", "Z0", "A", "B", "Y_tilde"])


def nplayer_frame(eq) -> pd.DataFrame:
    """One row per (grid node, player) of an N-player equilibrium."""
    grid = eq.game.grid
    pi, Zi0 = eq.pi_star, _at_nodes(eq.Zi0)
    rows = [
        {"t": float(grid[j]), "player_id": i, "pi": pi[i, j], "c": eq.c_star[i, j], "Zi0": Zi0[i, j]}
        for j in range(len(grid))
        for i in range(eq.game.n_players)
    ]
    return pd.DataFrame(rows, columns=["t", "player_id", "pi", "c", "Zi0"])


def config_hash(config_dict: Dict[str, Any]) -> str:
    canonical = json.dumps(to_jsonable(config_dict), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def run_metadata(config_dict: Dict[str, Any], seed: int) -> Dict[str, Any]:
    return {
        "config_hash": config_hash(config_dict),
        "seed": seed,
        "versions": {
            "ezmfg": ezmfg.__version__,
            "numpy": np.__version__,
            "pandas": pd.__version__,
            "python": platform.python_version(),
        },
    }


def write_meta(out_dir: Path, config_dict: Dict[str, Any], seed: int) -> Path:
    path = write_json(Path(out_dir) / "meta.json", run_metadata(config_dict, seed))
    logger.debug(f"wrote {path}")
    return path
