"""Reproducible serialization: fixed-precision JSON, config hashing, provenance stamps."""
from __future__ import annotations

import hashlib
import json
import math
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
import pandas as pd

from . import __version__

__all__ = [
    "FLOAT_DIGITS",
    "config_hash",
    "normalize_floats",
    "placement_from_json",
    "placement_to_json",
    "provenance",
    "read_json",
    "servers_from_json",
    "servers_to_json",
    "write_csv",
    "write_json",
]

FLOAT_DIGITS = 10


def _fix(x: float):
    if math.isnan(x):
        return "nan"
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return float(f"{x:.{FLOAT_DIGITS}g}")


def normalize_floats(obj):
    """Recursively make ``obj`` JSON-ready with floats rounded to fixed significant digits."""
    if isinstance(obj, dict):
        return {str(k): normalize_floats(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [normalize_floats(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return normalize_floats(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        return _fix(float(obj))
    if isinstance(obj, (Path, pd.Timedelta, pd.Timestamp)):
        return str(obj)
    return obj


def config_hash(config: dict) -> str:
    """Short SHA-256 of the canonical JSON form of ``config``."""
    text = json.dumps(normalize_floats(config), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(text.encode()).hexdigest()[:16]


def provenance(cfg_hash: str) -> dict:
    return {"config_hash": cfg_hash, "version": __version__}


def write_json(path, obj: dict, cfg_hash: Optional[str] = None) -> None:
    data = dict(obj)
    if cfg_hash is not None:
        data["provenance"] = provenance(cfg_hash)
    Path(path).write_text(json.dumps(normalize_floats(data), indent=2, sort_keys=True) + "\n")


def read_json(path) -> dict:
    return json.loads(Path(path).read_text())


def write_csv(path, df: pd.DataFrame, cfg_hash: Optional[str] = None) -> None:
    """CSV with a leading ``# config_hash=... version=...`` comment line."""
    with open(path, "w", newline="") as fh:
        if cfg_hash is not None:
            fh.write(f"# config_hash={cfg_hash} version={__version__}\n")
        df.to_csv(fh, index=False, float_format=f"%.{FLOAT_DIGITS}g")


def servers_to_json(s, station_ids: Sequence) -> list:
    return [{"station_id": str(sid), "count": int(c)} for sid, c in zip(station_ids, s) if c]


def servers_from_json(entries: list, station_ids: Sequence) -> np.ndarray:
    index = {str(sid): i for i, sid in enumerate(station_ids)}
    s = np.zeros(len(index), dtype=np.int64)
    for e in entries:
        sid = str(e["station_id"])
        if sid not in index:
            raise ValueError(f"placement names unknown station {sid!r}")
        s[index[sid]] += int(e["count"])
    return s


def placement_to_json(s, station_ids: Sequence, K: int, C: float, beta_star=None, eta_star=None,
                      scheme: str = "") -> dict:
    return {
        "K": int(K),
        "C": float(C),
        "beta_star": None if beta_star is None else float(beta_star),
        "eta_star": None if eta_star is None else float(eta_star),
        "scheme": scheme,
        "servers": servers_to_json(s, station_ids),
    }


def placement_from_json(obj: dict, station_ids: Sequence) -> tuple[np.ndarray, dict]:
    for key in ("K", "C", "servers"):
        if key not in obj:
            raise ValueError(f"placement JSON lacks {key!r}")
    s = servers_from_json(obj["servers"], station_ids)
    if int(s.sum()) != int(obj["K"]):
        raise ValueError(f"placement servers sum to {int(s.sum())} but K={obj['K']}")
    return s, obj
