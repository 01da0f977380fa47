"""Cell sets: (row key, column, expected value) triples and update cases."""

from __future__ import annotations

import json
from dataclasses import dataclass, field

from castle.errors import DatasetError


@dataclass(frozen=True, order=True)
class Cell:
    row_key: tuple
    column: str
    value: str | None = field(default=None, compare=False)

    @property
    def address(self) -> tuple:
        return (self.row_key, self.column)


class CellDelta:
    """A set of cells with at most one expected value per (row key, column)."""

    def __init__(self, cells=()):
        self._cells: dict = {}
        for c in cells:
            if not isinstance(c, Cell):
                c = Cell(tuple(c[0]), c[1], c[2] if len(c) > 2 else None)
            if c.address in self._cells:
                raise DatasetError(f"duplicate cell {c.address!r}")
            self._cells[c.address] = c

    def __len__(self) -> int:
        return len(self._cells)

    def __iter__(self):
        return iter(sorted(self._cells.values(), key=lambda c: (c.row_key, c.column)))

    def __contains__(self, address) -> bool:
        return address in self._cells

    def __eq__(self, other) -> bool:
        return isinstance(other, CellDelta) and {a: c.value for a, c in self._cells.items()} == \
            {a: c.value for a, c in other._cells.items()}

    def __repr__(self) -> str:
        return f"CellDelta({len(self)} cells)"

    def addresses(self) -> frozenset:
        return frozenset(self._cells)

    def value(self, row_key: tuple, column: str):
        return self._cells[(row_key, column)].value

    def restrict(self, columns) -> "CellDelta":
        keep = set(columns)
        return CellDelta(c for c in self._cells.values() if c.column in keep)

    def columns(self) -> set:
        return {c.column for c in self._cells.values()}

    def rows(self) -> set:
        return {c.row_key for c in self._cells.values()}

    def to_json(self) -> list:
        return [[list(c.row_key), c.column, c.value] for c in self]

    @classmethod
    def from_json(cls, data) -> "CellDelta":
        return cls(Cell(tuple(k), col, v) for k, col, v in data)


@dataclass(frozen=True)
class UpdateCase:
    case_id: str
    dataset: str
    facts: dict
    seed_ref: str
    table: str
    key_columns: tuple
    truth_delta: CellDelta

    def __post_init__(self):
        if len(self.truth_delta) == 0:
            raise DatasetError(f"case {self.case_id} has an empty truth delta")

    def case_record(self) -> dict:
        return {"case_id": self.case_id, "dataset": self.dataset, "facts": self.facts,
                "seed_ref": self.seed_ref, "table": self.table, "key_columns": list(self.key_columns)}

    def truth_record(self) -> dict:
        return {"case_id": self.case_id, "cells": self.truth_delta.to_json()}


def dump_jsonl(records) -> str:
    return "".join(json.dumps(r, sort_keys=True, ensure_ascii=False) + "\n" for r in records)


def load_cases(case_text: str, truth_text: str) -> list:
    truths = {}
    for line in truth_text.splitlines():
        if line.strip():
            rec = json.loads(line)
            truths[rec["case_id"]] = CellDelta.from_json(rec["cells"])
    cases = []
    for line in case_text.splitlines():
        if not line.strip():
            continue
        rec = json.loads(line)
        if rec["case_id"] not in truths:
            raise DatasetError(f"no truth delta for case {rec['case_id']}")
        cases.append(UpdateCase(rec["case_id"], rec["dataset"], rec["facts"], rec["seed_ref"],
                                rec["table"], tuple(rec["key_columns"]), truths[rec["case_id"]]))
    return cases
