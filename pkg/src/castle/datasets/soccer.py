"""Soccer transfer cases from two adjacent-season player tables."""

from __future__ import annotations

import logging
from dataclasses import dataclass

from castle.cells import Cell, CellDelta, UpdateCase
from castle.datasets.catalogs import SOCCER_TABLE, bundled_catalog
from castle.datasets.tabular import read_csv, state_ref
from castle.errors import DatasetError
from castle.rules import recompute_table
from castle.schema import SchemaCatalog
from castle.values import canonical_value, typed_value

log = logging.getLogger(__name__)

# Properties of the club rather than the person.
CLUB_COLUMNS = (
    "club_code", "club_name", "squad_size", "average_age", "foreigners_number",
    "foreigners_percentage", "national_team_players", "stadium_name", "stadium_seats",
    "net_transfer_record", "coach_name", "competition_code", "competition_type",
    "competition_country", "competition_seasoned_href",
)
SERIAL_KEY = "player_id"


@dataclass(frozen=True)
class SoccerBuild:
    seed_rows: list        # year-A rows, canonical text, derived columns recomputed
    cases: list
    retired: int           # in year A, absent from year B
    unchanged: int
    skipped: int           # club_code or names missing


def _canonical_rows(header, raw_rows, catalog: SchemaCatalog, label: str) -> list:
    table = catalog.table(SOCCER_TABLE)
    expected = set(table.column_names)
    missing = sorted(expected - {SERIAL_KEY} - set(header))
    extra = sorted(set(header) - expected)
    if missing or extra:
        parts = []
        if missing:
            parts.append(f"missing {', '.join(missing)}")
        if extra:
            parts.append(f"unexpected {', '.join(extra)}")
        raise DatasetError(f"{label}: schema mismatch ({'; '.join(parts)})")
    rows, seen = [], set()
    for n, raw in enumerate(raw_rows, start=2):
        code = (raw.get("player_code") or "").strip()
        if not code:
            raise DatasetError(f"{label} line {n}: empty player_code")
        if code in seen:
            raise DatasetError(f"{label}: key collision, player_code {code!r} appears twice")
        seen.add(code)
        row = {}
        for col in table.columns:
            text = raw.get(col.name)
            try:
                row[col.name] = canonical_value(None if text in (None, "") else text, col)
            except ValueError as exc:
                raise DatasetError(f"{label} line {n}: bad {col.name} value {text!r}: {exc}") from None
        row["player_code"] = code
        rows.append(row)
    return rows


def typed_rows(rows, catalog: SchemaCatalog, table: str) -> list:
    cols = catalog.table(table).columns
    return [{c.name: typed_value(r[c.name], c) for c in cols} for r in rows]


def recompute(rows, catalog: SchemaCatalog) -> list:
    """Canonical rows with every derived column recomputed over ``rows``."""
    fresh = recompute_table(catalog, SOCCER_TABLE, {SOCCER_TABLE: typed_rows(rows, catalog, SOCCER_TABLE)})
    table = catalog.table(SOCCER_TABLE)
    return [{c.name: canonical_value(r[c.name], c) for c in table.columns} for r in fresh]


def build_soccer_cases(year_a, year_b, catalog: SchemaCatalog | None = None, *,
                       seed_ref: str | None = None) -> SoccerBuild:
    """One case per player whose club changed between the two seasons.

    ``year_a``/``year_b`` are CSV paths or text. Truth for a case is the
    mover's club columns at their year-B values plus the derived columns of
    every row in the source and destination clubs, recomputed over the
    year-A population with only this move applied.
    """
    catalog = catalog or bundled_catalog("soccer")
    rows_a = _canonical_rows(*read_csv(year_a), catalog, "year A")
    rows_b = _canonical_rows(*read_csv(year_b), catalog, "year B")
    for i, row in enumerate(rows_a, start=1):
        if row[SERIAL_KEY] is None:
            row[SERIAL_KEY] = str(i)
    ids = [r[SERIAL_KEY] for r in rows_a]
    if len(set(ids)) != len(ids):
        raise DatasetError("year A: key collision on player_id")
    seed = recompute(rows_a, catalog)
    seed_ref = seed_ref or state_ref("soccer", {SOCCER_TABLE: seed}, catalog)
    by_b = {r["player_code"]: r for r in rows_b}
    derived = catalog.derived_columns(SOCCER_TABLE)
    base_club = [c for c in CLUB_COLUMNS if c not in derived]

    cases, retired, unchanged, skipped = [], 0, 0, 0
    for index, row in enumerate(seed):
        code = row["player_code"]
        after = by_b.get(code)
        if after is None:
            retired += 1
            continue
        src, dst = row["club_code"], after["club_code"]
        if src is None or dst is None or not row["first_name"] or not row["last_name"]:
            skipped += 1
            continue
        if src == dst:
            unchanged += 1
            continue
        moved = [dict(r) for r in seed]
        for col in base_club:
            moved[index][col] = after[col]
        moved = recompute(moved, catalog)
        cells = {(code, col): moved[index][col] for col in CLUB_COLUMNS}
        for r in moved:
            if r["club_code"] in (src, dst):
                for col in derived:
                    cells[(r["player_code"], col)] = r[col]
        delta = CellDelta(Cell((k,), col, v) for (k, col), v in cells.items())
        facts = {"first_name": row["first_name"], "last_name": row["last_name"],
                 "player_code": code, "from_club_code": src, "dest_club_code": dst}
        cases.append(UpdateCase(f"soccer-{len(cases) + 1:04d}", "soccer", facts, seed_ref,
                                SOCCER_TABLE, ("player_code",), delta))
    log.info("soccer build: %d cases, %d retired skipped, %d unchanged, %d incomplete",
             len(cases), retired, unchanged, skipped)
    return SoccerBuild(seed, cases, retired, unchanged, skipped)
