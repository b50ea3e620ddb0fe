"""JSON verdicts and CSV witness dumps."""

from __future__ import annotations

import csv
import io
import json

import numpy as np

SCHEMA_VERSION = 1


def _plain(obj):
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if np.isfinite(v) else str(v)
    if hasattr(obj, "to_dict"):
        return _plain(obj.to_dict())
    return obj


def check_report(check: str, instance, grid, witnesses, max_residual, tolerance, **extra) -> dict:
    out = {
        "check": check,
        "instance": instance,
        "grid": grid,
        "witnesses": list(witnesses),
        "max_residual": max_residual,
        "tolerance": tolerance,
    }
    out.update(extra)
    return _plain(out)


def dumps(report: dict) -> str:
    return json.dumps(_plain(report), indent=2, sort_keys=True) + "\n"


def witnesses_csv(witnesses, extra_columns: dict | None = None) -> str:
    """One row per witness; nested fields are JSON-encoded."""
    rows = [_plain(w) for w in witnesses]
    extra = extra_columns or {}
    keys = sorted({k for r in rows for k in r})
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\r\n")
    writer.writerow(list(extra) + keys)
    for r in rows:
        cells = [json.dumps(r[k]) if isinstance(r.get(k), (list, dict)) else r.get(k, "") for k in keys]
        writer.writerow(list(extra.values()) + cells)
    return buf.getvalue()
