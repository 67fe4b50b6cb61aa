"""Byte-stable CSV and JSON report emission."""
from __future__ import annotations

import csv
import io
import json
import math
from pathlib import Path

import numpy as np

from ..errors import IoFailure
from .config import FORMATS, ExperimentConfig


def _clean(v):
    """Make values JSON-safe: numpy scalars to Python, non-finite floats to strings."""
    if isinstance(v, dict):
        return {str(k): _clean(x) for k, x in v.items()}
    if isinstance(v, (list, tuple, np.ndarray)):
        return [_clean(x) for x in v]
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, (float, np.floating)):
        v = float(v)
        return v if math.isfinite(v) else str(v)
    if isinstance(v, np.bool_):
        return bool(v)
    return v


def _cell(v) -> str:
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def csv_text(columns, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        w.writerow([_cell(v) for v in row])
    return buf.getvalue()


def summary(result, cfg: ExperimentConfig | None = None) -> dict:
    from .. import __version__

    out = dict(result.to_json())
    out["experiment"] = result.experiment
    out["calibration"] = getattr(result, "calibration", {})
    out["version"] = __version__
    if cfg is not None:
        out["config"] = cfg.to_json()
        out["seed"] = cfg.seed
    return _clean(out)


def write_report(result, path, fmt: str = "both", cfg: ExperimentConfig | None = None) -> list[Path]:
    """Write ``<experiment>.csv`` and/or ``<experiment>.json`` into the directory ``path``."""
    if fmt not in FORMATS:
        raise IoFailure(f"unknown format {fmt!r}; valid tags: {', '.join(FORMATS)}")
    path = Path(path)
    if not path.parent.exists():
        raise IoFailure(f"parent directory {path.parent} does not exist")
    stem = result.experiment
    written = []
    try:
        path.mkdir(exist_ok=True)
        if fmt in ("csv", "both"):
            target = path / f"{stem}.csv"
            target.write_text(csv_text(*result.table()))
            written.append(target)
        if fmt in ("json", "both"):
            target = path / f"{stem}.json"
            target.write_text(json.dumps(summary(result, cfg), sort_keys=True, indent=2) + "\n")
            written.append(target)
    except OSError as exc:
        raise IoFailure(f"cannot write report to {path}: {exc}") from exc
    return written
