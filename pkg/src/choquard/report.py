"""Bit-stable CSV/JSON report writers.

Floats are written with 17 significant digits and keys are sorted, so
identical inputs give byte-identical files.
"""

from __future__ import annotations

import math
import os

import numpy as np

from .errors import ChoquardError

SCHEMA_ID = "choquard-report/1"

# JSON layout of every report; checked by the test-suite with jsonschema.
REPORT_SCHEMA = {
    "$schema": "http://json-schema.org/draft-07/schema#",
    "type": "object",
    "required": ["schema", "version", "config", "records"],
    "properties": {
        "schema": {"const": SCHEMA_ID},
        "version": {"type": "string"},
        "config": {"type": "object"},
        "records": {"type": "array", "items": {"type": "object"}},
    },
    "additionalProperties": False,
}


class ReportError(ChoquardError, OSError):
    """A report could not be written."""


def _plain(x):
    if isinstance(x, dict):
        return {str(k): _plain(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_plain(v) for v in x]
    if isinstance(x, np.ndarray):
        return [_plain(v) for v in x.tolist()]
    if isinstance(x, (bool, np.bool_)):
        return bool(x)
    if isinstance(x, (int, np.integer)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        return float(x)
    return x


def format_float(v: float) -> str:
    if math.isnan(v):
        return "NaN"
    if math.isinf(v):
        return "Infinity" if v > 0 else "-Infinity"
    return "%.17g" % v


def _json(x) -> str:
    if isinstance(x, dict):
        items = sorted(x.items())
        return "{" + ", ".join(f"{_json(str(k))}: {_json(v)}" for k, v in items) + "}"
    if isinstance(x, list):
        return "[" + ", ".join(_json(v) for v in x) + "]"
    if isinstance(x, bool):
        return "true" if x else "false"
    if x is None:
        return "null"
    if isinstance(x, int):
        return str(x)
    if isinstance(x, float):
        s = format_float(x)
        # JSON has no non-finite numbers; keep them as strings
        return f'"{s}"' if not math.isfinite(x) else s
    s = str(x)
    out = s.replace("\\", "\\\\").replace('"', '\\"').replace("\n", "\\n").replace("\t", "\\t")
    return f'"{out}"'


def _cell(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return format_float(v)
    if isinstance(v, (list, dict)):
        s = _json(v)
        return '"' + s.replace('"', '""') + '"'
    if v is None:
        return ""
    s = str(v)
    if any(c in s for c in ',"\n'):
        return '"' + s.replace('"', '""') + '"'
    return s


def render(records, fmt: str, meta: dict | None = None, fields=None) -> str:
    """Report text for ``records`` (a list of flat dicts)."""
    records = [_plain(r) for r in records]
    meta = _plain(meta or {})
    if fmt == "json":
        doc = {"schema": SCHEMA_ID, "version": str(meta.get("version", "")),
               "config": meta.get("config", {}), "records": records}
        return _json(doc) + "\n"
    if fmt == "csv":
        lines = [f"# {k}={_json(v)}" for k, v in sorted(meta.items())]
        if fields is None:
            fields = sorted({k for r in records for k in r})
        lines.append(",".join(fields))
        for r in records:
            lines.append(",".join(_cell(r.get(f)) for f in fields))
        return "\n".join(lines) + "\n"
    raise ValueError(f"unknown report format {fmt!r}")


def emit_report(records, fmt: str, path, meta: dict | None = None, fields=None) -> str:
    """Write a report and return its path.

    Parameters
    ----------
    records : list of dict
    fmt : {"csv", "json"}
    path : str or PathLike
    meta : dict, optional
        ``{"config": ..., "version": ...}``; in CSV each key becomes a ``# key=value`` line.
    fields : list of str, optional
        CSV column order; defaults to the sorted union of record keys.
    """
    text = render(records, fmt, meta, fields)
    path = os.fspath(path)
    try:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    except OSError as exc:
        raise ReportError(f"cannot write report {path}: {exc.strerror or exc}") from exc
    return path
