"""Cell-level identification and correctness metrics.

delta: cells the statement targets (row key x column, plus trigger-maintained
cells). truth: cells that must change, with expected values. Ratios are exact
``Fraction`` values; reports render them as percentages.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

from castle.cells import CellDelta
from castle.errors import MetricError
from castle.forge import ComposedUpdate, UpdateTargetSet, value_expr
from castle.sql import ast
from castle.values import values_equal

GROUPS = ("overall", "direct", "cascade", "derived")
REPORT_COLUMNS = ("method", "model", "dataset", "group", "recall", "f1", "cc", "type1", "type2",
                  "precision", "cc_macro", "cases", "failed")


def _addresses(cells) -> frozenset:
    if isinstance(cells, CellDelta):
        return cells.addresses()
    return frozenset(cells)


# -- identification --------------------------------------------------------------------

def identified_cells(composed: ComposedUpdate, conn, *, key_columns, triggers=()) -> frozenset:
    """Cells the statement writes, evaluated read-only against the current state.

    ``triggers`` are deployed ``TriggerInfo`` records; one defined on the
    updated table, maintaining that table and watching a SET column adds its
    covered columns for every row in the old and new groups of each matching row.
    """
    from castle.db import matching_keys

    sk = composed.skeleton
    key_columns = tuple(key_columns)
    set_cols = set(sk.columns)
    active = [t for t in triggers
              if t.table == sk.table and t.target_table == sk.table and t.group_columns
              and set(t.watched_columns) & set_cols]
    extra, slices = [], []
    for t in active:
        start = len(extra)
        for g in t.group_columns:
            extra.append(ast.Column(g, sk.alias))
        for g in t.group_columns:
            extra.append(value_expr(sk.value(g)) if g in set_cols else ast.Column(g, sk.alias))
        slices.append((t, start))
    matches = matching_keys(conn, sk.table, key_columns, sk.where, alias=sk.alias, extra=extra)
    cells = {(k, c) for k, _ in matches for c in sk.columns}
    for t, start in slices:
        n = len(t.group_columns)
        groups = set()
        for _, values in matches:
            groups.add(tuple(values[start:start + n]))
            groups.add(tuple(values[start + n:start + 2 * n]))
        groups.discard(tuple([None] * n))
        if not groups:
            continue
        members = matching_keys(conn, sk.table, key_columns, None,
                                extra=[ast.Column(g) for g in t.group_columns])
        for key, gv in members:
            if tuple(gv) in groups:
                cells.update((key, c) for c in t.covered_columns)
    return frozenset(cells)


# -- ratios ----------------------------------------------------------------------------

def _require(truth) -> frozenset:
    required = _addresses(truth)
    if not required:
        raise MetricError("metric undefined: the truth set is empty")
    return required


def recall(identified, truth) -> Fraction:
    required = _require(truth)
    return Fraction(len(_addresses(identified) & required), len(required))


def precision(identified, truth) -> Fraction:
    required = _require(truth)
    found = _addresses(identified)
    return Fraction(len(found & required), len(found)) if found else Fraction(0)


def f1(identified, truth) -> Fraction:
    p, r = precision(identified, truth), recall(identified, truth)
    return 2 * p * r / (p + r) if p + r > 0 else Fraction(0)


def _correct_count(post_state, truth: CellDelta, columns=None, identified=None) -> int:
    columns = columns or {}
    correct = 0
    for cell in truth:
        if identified is not None and cell.address not in identified:
            continue
        if cell.row_key not in post_state.rows:
            raise MetricError(f"row {cell.row_key!r} named in the truth set is missing from the snapshot")
        col = columns.get(cell.column)
        kind, scale = (col.kind, col.scale) if col is not None else ("text", None)
        if values_equal(post_state.rows[cell.row_key].get(cell.column), cell.value, kind, scale):
            correct += 1
    return correct


def cellwise_correctness(post_state, truth: CellDelta, columns=None, identified=None) -> Fraction:
    """Share of truth cells whose post-state value equals the expected value.

    ``columns`` maps column name to ``ColumnDef`` for numeric comparison at
    the declared scale; unknown columns compare as text. With ``identified``
    a cell only counts if the statement also targeted it, so a cell that
    already held its expected value is not credited to a statement that
    never wrote it.
    """
    _require(truth)
    found = None if identified is None else _addresses(identified)
    return Fraction(_correct_count(post_state, truth, columns, found), len(truth))


# -- accumulation ----------------------------------------------------------------------

@dataclass(frozen=True)
class Tally:
    """Summable cell counts; merging is associative and commutative."""

    identified: int = 0
    required: int = 0
    hit: int = 0
    correct: int = 0
    cases: int = 0
    failed: int = 0
    cc_sum: Fraction = field(default=Fraction(0))  # sum of per-case CC, for the macro average

    def __add__(self, other: "Tally") -> "Tally":
        return Tally(self.identified + other.identified, self.required + other.required,
                     self.hit + other.hit, self.correct + other.correct, self.cases + other.cases,
                     self.failed + other.failed, self.cc_sum + other.cc_sum)

    @property
    def recall(self) -> Fraction:
        return Fraction(self.hit, self.required) if self.required else Fraction(0)

    @property
    def precision(self) -> Fraction:
        return Fraction(self.hit, self.identified) if self.identified else Fraction(0)

    @property
    def f1(self) -> Fraction:
        total = self.identified + self.required
        return Fraction(2 * self.hit, total) if total else Fraction(0)

    @property
    def cc(self) -> Fraction:
        return Fraction(self.correct, self.required) if self.required else Fraction(0)

    @property
    def cc_macro(self) -> Fraction:
        return self.cc_sum / self.cases if self.cases else Fraction(0)

    @property
    def type1(self) -> int:
        return self.identified - self.hit

    @property
    def type2(self) -> int:
        return self.required - self.hit


def score_case(identified, truth: CellDelta, post_state, columns=None) -> Tally:
    required = _require(truth)
    found = _addresses(identified)
    correct = _correct_count(post_state, truth, columns, found)
    return Tally(len(found), len(required), len(found & required), correct, 1, 0,
                 Fraction(correct, len(required)))


def failed_case(truth: CellDelta) -> Tally:
    """A case that produced no statement scores zero on every required cell."""
    return Tally(0, len(_require(truth)), 0, 0, 1, 1, Fraction(0))


def breakdown(identified, truth: CellDelta, post_state, targets: UpdateTargetSet, columns=None,
              *, failed: bool = False) -> dict:
    """Tallies per group (overall, direct, cascade, derived), cells restricted by column."""
    found = _addresses(identified)
    seen = {c for _, c in found} | truth.columns()
    for col in sorted(seen):
        if targets.group_of(col) is None:
            raise MetricError(f"column {col!r} falls outside the direct/cascade/derived groups")
    out = {"overall": failed_case(truth) if failed else score_case(found, truth, post_state, columns)}
    for group in GROUPS[1:]:
        cols = set(getattr(targets, group))
        sub_truth = truth.restrict(cols)
        if not len(sub_truth):
            continue
        if failed:
            out[group] = failed_case(sub_truth)
        else:
            out[group] = score_case({a for a in found if a[1] in cols}, sub_truth, post_state, columns)
    return out


def _fold(value) -> str:
    return str(value).strip().casefold()


def truth_targets(truth: CellDelta, catalog, table: str, facts=(), mentions=(),
                  statement_targets: UpdateTargetSet | None = None) -> UpdateTargetSet:
    """Group truth columns independently of any generated statement.

    Derived by schema role; direct if the column is named by the instruction
    (``mentions``) or one of its expected values equals an instruction fact;
    cascade otherwise. Columns only the statement touched keep the
    statement's grouping.
    """
    schema = catalog.table(table)
    folded = {_fold(v) for v in facts if v is not None}
    groups = {"direct": [], "cascade": [], "derived": []}
    placed = set()
    for col in sorted(truth.columns()):
        if schema.has_column(col) and schema.column(col).role == "derived-aggregate":
            group = "derived"
        elif col in set(mentions) or any(c.value is not None and _fold(c.value) in folded
                                         for c in truth if c.column == col):
            group = "direct"
        else:
            group = "cascade"
        groups[group].append(col)
        placed.add(col)
    if statement_targets is not None:
        for group in ("direct", "cascade", "derived"):
            for col in getattr(statement_targets, group):
                if col not in placed:
                    groups[group].append(col)
                    placed.add(col)
    return UpdateTargetSet(tuple(groups["direct"]), tuple(groups["cascade"]), tuple(groups["derived"]))


# -- reports ---------------------------------------------------------------------------

@dataclass(frozen=True)
class MetricsReport:
    method: str
    model: str
    dataset: str
    group: str
    tally: Tally

    def __post_init__(self):
        t = self.tally
        for name in ("recall", "precision", "f1", "cc"):
            if not 0 <= getattr(t, name) <= 1:
                raise MetricError(f"{name} out of bounds")

    @property
    def recall(self) -> Fraction:
        return self.tally.recall

    @property
    def precision(self) -> Fraction:
        return self.tally.precision

    @property
    def f1(self) -> Fraction:
        return self.tally.f1

    @property
    def cellwise_correctness(self) -> Fraction:
        return self.tally.cc

    @property
    def type1_count(self) -> int:
        return self.tally.type1

    @property
    def type2_count(self) -> int:
        return self.tally.type2

    def row(self) -> dict:
        t = self.tally
        return {"method": self.method, "model": self.model, "dataset": self.dataset, "group": self.group,
                "recall": pct(t.recall), "f1": pct(t.f1), "cc": pct(t.cc), "type1": t.type1,
                "type2": t.type2, "precision": pct(t.precision), "cc_macro": pct(t.cc_macro),
                "cases": t.cases, "failed": t.failed}


def pct(x: Fraction) -> str:
    """Percentage with two decimals, rounded half up from the exact ratio."""
    scaled = x * 10000
    n = (scaled.numerator * 2 + scaled.denominator) // (2 * scaled.denominator)
    return f"{n // 100}.{n % 100:02d}"


def _sorted(reports) -> list:
    order = {g: i for i, g in enumerate(GROUPS)}
    return sorted(reports, key=lambda r: (r.dataset, order.get(r.group, 99), r.method, r.model))


def render_csv(reports) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=REPORT_COLUMNS, lineterminator="\n")
    w.writeheader()
    for r in _sorted(reports):
        w.writerow(r.row())
    return buf.getvalue()


def render_jsonl(reports) -> str:
    lines = []
    for r in _sorted(reports):
        row = r.row()
        t = r.tally
        row.update(identified=t.identified, required=t.required, hit=t.hit, correct=t.correct)
        lines.append(json.dumps(row, sort_keys=False) + "\n")
    return "".join(lines)


def render_table(reports) -> str:
    """One grid per (dataset, group): methods as rows, models as columns, cells 'R | F1 | CC'."""
    blocks = []
    reports = _sorted(reports)
    keys = list(dict.fromkeys((r.dataset, r.group) for r in reports))
    for dataset, group in keys:
        sub = [r for r in reports if (r.dataset, r.group) == (dataset, group)]
        methods = list(dict.fromkeys(r.method for r in sub))
        models = sorted(dict.fromkeys(r.model for r in sub))
        cell = {(r.method, r.model): f"{pct(r.recall)} | {pct(r.f1)} | {pct(r.cellwise_correctness)}"
                for r in sub}
        header = ["method"] + models
        rows = [[m] + [cell.get((m, mo), "-") for mo in models] for m in methods]
        widths = [max(len(str(row[i])) for row in [header] + rows) for i in range(len(header))]
        lines = [f"{dataset} / {group} (Recall | F1 | CC, %)"]
        lines.append("  ".join(h.ljust(w) for h, w in zip(header, widths)).rstrip())
        lines.append("  ".join("-" * w for w in widths))
        lines += ["  ".join(v.ljust(w) for v, w in zip(row, widths)).rstrip() for row in rows]
        blocks.append("\n".join(lines))
    return "\n\n".join(blocks) + "\n"


RENDERERS = {"table-text": render_table, "csv": render_csv, "json-lines": render_jsonl}
EXTENSIONS = {"table-text": "txt", "csv": "csv", "json-lines": "jsonl"}


def emit_report(reports, fmt: str, path) -> Path:
    if fmt not in RENDERERS:
        raise MetricError(f"unknown report format {fmt!r}")
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(RENDERERS[fmt](reports), encoding="utf-8")
    except OSError as exc:
        raise MetricError(f"cannot write report {path}: {exc}") from None
    return path
