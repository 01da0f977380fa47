"""CSV input helpers shared by the builders."""

from __future__ import annotations

import csv
import hashlib
import io
from pathlib import Path

from castle.errors import DatasetError


def read_csv(source) -> tuple:
    """(header, rows) from a path or a text blob; rows are dicts of raw strings."""
    if isinstance(source, Path) or (isinstance(source, str) and "\n" not in source):
        path = Path(source)
        if not path.exists():
            raise DatasetError(f"input file not found: {path}")
        text = path.read_text(encoding="utf-8-sig")
    else:
        text = source
    reader = csv.DictReader(io.StringIO(text))
    if not reader.fieldnames:
        raise DatasetError("input CSV has no header")
    rows = []
    for n, row in enumerate(reader, start=2):
        if None in row:
            raise DatasetError(f"line {n}: more fields than header columns")
        rows.append(row)
    return tuple(reader.fieldnames), rows


def write_csv(columns, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow(["" if r[c] is None else r[c] for c in columns])
    return buf.getvalue()


def state_ref(dataset: str, rows_by_table: dict, catalog) -> str:
    """Content-derived identifier of a seed state."""
    h = hashlib.sha256()
    for name in sorted(rows_by_table):
        cols = catalog.table(name).column_names
        h.update(name.encode() + b"\n" + write_csv(cols, rows_by_table[name]).encode())
    return f"{dataset}-{h.hexdigest()[:12]}"
