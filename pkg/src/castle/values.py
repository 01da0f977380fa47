"""Canonical cell values.

Snapshots, truth deltas and metrics all compare cells through these
functions: text verbatim, numerics rendered at the column's declared scale,
JSON with sorted keys, NULL as ``None``.
"""

from __future__ import annotations

import json
from decimal import ROUND_HALF_UP, Decimal, InvalidOperation

NULL = None


def _plain(d: Decimal) -> str:
    text = format(d, "f")
    if "." in text:
        text = text.rstrip("0").rstrip(".")
    return "0" if text in ("-0", "") else text


def canonical_number(value, scale: int | None) -> str:
    d = value if isinstance(value, Decimal) else Decimal(str(value))
    if scale is None:
        return _plain(d)
    q = d.quantize(Decimal(1).scaleb(-scale), rounding=ROUND_HALF_UP)
    text = format(q, "f")
    return text[1:] if text.startswith("-") and Decimal(text) == 0 else text


def canonical_value(value, column=None) -> str | None:
    """Canonical text for a cell; ``column`` is a ``ColumnDef`` or ``None``."""
    if value is None:
        return NULL
    kind = column.kind if column is not None else None
    scale = column.scale if column is not None else None
    if isinstance(value, bool):
        return "true" if value else "false"
    if kind == "json":
        if isinstance(value, str):
            if value == "":
                return NULL
            value = json.loads(value)
        return json.dumps(value, sort_keys=True, ensure_ascii=False)
    if kind in ("integer", "numeric"):
        if isinstance(value, str):
            if value.strip() == "":
                return NULL
            try:
                value = Decimal(value.strip())
            except InvalidOperation:
                return value
        return canonical_number(value, scale if kind == "numeric" else 0)
    if isinstance(value, (int, Decimal, float)):
        return canonical_number(value, scale)
    if isinstance(value, (dict, list)):
        return json.dumps(value, sort_keys=True, ensure_ascii=False)
    return str(value)


def values_equal(a: str | None, b: str | None, kind: str = "text", scale: int | None = None) -> bool:
    """Cell equality: NULL = NULL, numerics after rounding to ``scale``, text exact."""
    if a is None or b is None:
        return a is None and b is None
    if a == b:
        return True
    if kind not in ("integer", "numeric"):
        return False
    try:
        da, db = Decimal(a), Decimal(b)
    except InvalidOperation:
        return False
    if scale is None:
        return da == db
    step = Decimal(1).scaleb(-scale)
    return da.quantize(step, rounding=ROUND_HALF_UP) == db.quantize(step, rounding=ROUND_HALF_UP)


def typed_value(text: str | None, column):
    """Parse a canonical/CSV text value into a Python value for the column's kind."""
    if text is None:
        return None
    kind = column.kind
    if kind in ("integer", "numeric"):
        if text.strip() == "":
            return None
        d = Decimal(text.strip())
        return int(d) if kind == "integer" else d
    if kind == "json":
        return None if text == "" else json.loads(text)
    return text
