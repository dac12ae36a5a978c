"""Deterministic CSV/JSON writers with embedded reproducibility metadata.

Every file starts with comment lines carrying the configuration hash, the
master seed and the dataset version, so any output can be traced back to the
exact run that produced it.  Floats are formatted with a fixed %.10g so that
identical runs produce byte-identical files.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json

import numpy as np


def _canonical(obj):
    if dataclasses.is_dataclass(obj) and not isinstance(obj, type):
        return {k: _canonical(v) for k, v in dataclasses.asdict(obj).items()}
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating, np.integer, np.bool_)):
        return obj.item()
    if isinstance(obj, dict):
        return {str(k): _canonical(v) for k, v in sorted(obj.items(), key=lambda kv: str(kv[0]))}
    if isinstance(obj, (list, tuple)):
        return [_canonical(v) for v in obj]
    return obj


def config_hash(obj) -> str:
    """Short stable hash of any configuration object."""
    blob = json.dumps(_canonical(obj), sort_keys=True).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def format_value(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return "%.10g" % v
    return str(v)


def write_csv(path, columns, rows, meta: dict | None = None) -> None:
    lines = []
    for k, v in (meta or {}).items():
        lines.append(f"# {k} = {format_value(v)}")
    lines.append(",".join(columns))
    for row in rows:
        lines.append(",".join(format_value(v) for v in row))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def write_json(path, payload, meta: dict | None = None) -> None:
    doc = dict(meta or {})
    doc.update(payload)
    doc = _canonical(doc)
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


def read_points_csv(path):
    """Read a zefoz_points.csv back into a list of row dicts."""
    rows = []
    with open(path) as fh:
        header = None
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if header is None:
                header = line.split(",")
                continue
            vals = line.split(",")
            row = {}
            for k, v in zip(header, vals):
                try:
                    row[k] = float(v)
                except ValueError:
                    row[k] = v
            rows.append(row)
    return rows
