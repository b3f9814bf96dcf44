"""Report emission: canonical JSON, CSV series, one-page text summaries.

The JSON report is byte-deterministic for a fixed config and seed: keys are
sorted, floats use Python's shortest round-trip representation (which parses
back to the exact double, the same fidelity as 17 significant digits), and
no timestamps or environment data are embedded.  CSV floats are written with
%.17g and a column-documenting header comment.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import asdict, is_dataclass
from pathlib import Path

import numpy as np


def jsonable(obj):
    """Recursively convert dataclasses / numpy values into JSON-ready data."""
    if obj is None or isinstance(obj, (bool, int, str)):
        return obj
    if isinstance(obj, float):
        if math.isnan(obj):
            return "nan"
        if math.isinf(obj):
            return "inf" if obj > 0 else "-inf"
        return obj
    if isinstance(obj, (np.floating, np.integer)):
        return jsonable(obj.item())
    if isinstance(obj, np.ndarray):
        return [jsonable(v) for v in obj.tolist()]
    if is_dataclass(obj) and not isinstance(obj, type):
        if hasattr(obj, "to_json_dict"):
            return jsonable(obj.to_json_dict())
        return jsonable(asdict(obj))
    if hasattr(obj, "to_json_dict"):
        return jsonable(obj.to_json_dict())
    if isinstance(obj, dict):
        return {str(k): jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [jsonable(v) for v in obj]
    raise TypeError(f"cannot serialize {type(obj)!r}")


def render_report(report):
    return json.dumps(jsonable(report), sort_keys=True, indent=2) + "\n"


def write_report(out_dir, report, series=None, summary_lines=None):
    """Write report.json, series/*.csv, and summary.txt under out_dir.

    `series` maps a name to (header, 2-d array); the header line documents
    the columns and is emitted as a leading comment.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    text = render_report(report)
    (out / "report.json").write_text(text)
    if series:
        series_dir = out / "series"
        series_dir.mkdir(exist_ok=True)
        for name, (header, rows) in series.items():
            rows = np.atleast_2d(np.asarray(rows, dtype=float))
            path = series_dir / f"{name}.csv"
            if rows.size == 0:
                path.write_text(f"# columns: {header}\n")
            else:
                np.savetxt(path, rows, fmt="%.17g", delimiter=",", header=f"columns: {header}")
    if summary_lines is not None:
        (out / "summary.txt").write_text("\n".join(summary_lines) + "\n")
    return hashlib.sha256(text.encode()).hexdigest()


def config_hash(raw_config):
    """Stable hash of a validated raw config mapping (provenance anchor)."""
    return hashlib.sha256(
        json.dumps(jsonable(raw_config), sort_keys=True).encode()
    ).hexdigest()[:16]
