"""CSV and JSON encodings of result tables.

CSV: a header row with the table columns, then one line per row; empty
cells are missing values, floats use the shortest round-tripping repr.
JSON: ``{"kind": ..., "columns": [...], "rows": [{column: value}, ...]}``
with missing values as ``null``.  Both keep the table's row order.
"""

from __future__ import annotations

import csv
import io
import json
import math
import sys
from pathlib import Path

FORMATS = ("csv", "json")


def _cell(v) -> str:
    if v is None:
        return ""
    if isinstance(v, bool):
        return "1" if v else "0"
    if isinstance(v, float):
        return repr(float(v))
    return str(v)


def _json_value(v):
    if isinstance(v, float):
        return float(v) if math.isfinite(v) else None
    return v


def encode(columns, rows, fmt: str = "csv", kind: str | None = None) -> str:
    if fmt not in FORMATS:
        raise ValueError(f"unknown format {fmt!r}; expected one of {FORMATS}")
    if fmt == "json":
        doc = {"kind": kind, "columns": list(columns),
               "rows": [{c: _json_value(r.get(c)) for c in columns} for r in rows]}
        return json.dumps(doc, indent=1, allow_nan=False) + "\n"
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([_cell(r.get(c)) for c in columns])
    return buf.getvalue()


def write_text(text: str, path) -> None:
    """Write ``text`` to ``path`` (``-`` or None for stdout)."""
    if path in (None, "-"):
        sys.stdout.write(text)
        return
    path = Path(path)
    try:
        path.write_text(text)
    except OSError as exc:
        raise OSError(f"cannot write report to {path}: {exc.strerror}") from exc


def emit_report(table, path=None, fmt: str = "csv") -> str:
    """Encode a :class:`~risshare.harness.sweep.ResultTable` and write it out."""
    if not table.rows:
        raise ValueError("refusing to write an empty result table")
    text = encode(table.columns, table.rows, fmt, table.kind)
    write_text(text, path)
    return text


def decode(text: str, fmt: str = "csv") -> list[dict]:
    """Parse a report back into rows of strings (csv) or JSON values."""
    if fmt == "json":
        return json.loads(text)["rows"]
    return list(csv.DictReader(io.StringIO(text)))
