"""Dataset artifact files: seed dump, case file, truth-delta file.

Layout of an artifact directory (format 1)::

    manifest.json          format, dataset, seed_ref, tables, case count
    schema.sql             CREATE TABLE statements
    annotations.csv        table,column,rule
    seed.sql               schema.sql followed by one INSERT per row
    seed_<table>.csv       the same rows as CSV (empty field = NULL)
    cases.jsonl            one case per line: case_id, dataset, facts, seed_ref, table, key_columns
    truth.jsonl            one line per case: case_id, cells = [[row_key], column, value]
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

from castle.cells import dump_jsonl, load_cases
from castle.datasets.tabular import read_csv, write_csv
from castle.errors import DatasetError
from castle.schema import (SchemaCatalog, annotate_roles, ddl_ident, dump_annotations, load_annotations,
                           load_schema, render_catalog)
from castle.values import canonical_value

FORMAT = 1


def _literal(value, column) -> str:
    if value is None:
        return "NULL"
    if column.kind in ("integer", "numeric"):
        return value
    return "'" + value.replace("'", "''") + "'"


def seed_sql(catalog: SchemaCatalog, rows_by_table: dict) -> str:
    """DDL plus deterministic INSERTs; serial sequences are advanced past the data."""
    parts = [render_catalog(catalog)]
    for table in catalog.tables:
        rows = rows_by_table.get(table.name, [])
        if not rows:
            continue
        names = ", ".join(ddl_ident(c.name) for c in table.columns)
        for r in rows:
            vals = ", ".join(_literal(r[c.name], c) for c in table.columns)
            parts.append(f"INSERT INTO {ddl_ident(table.name)} ({names}) VALUES ({vals});\n")
        for c in table.columns:
            if c.sql_type == "SERIAL":
                parts.append(f"SELECT setval(pg_get_serial_sequence('{table.name}', '{c.name}'), "
                             f"(SELECT max({ddl_ident(c.name)}) FROM {ddl_ident(table.name)}));\n")
    return "".join(parts)


@dataclass(frozen=True)
class DatasetArtifacts:
    dataset: str
    seed_ref: str
    catalog: SchemaCatalog
    rows_by_table: dict
    cases: list

    @property
    def seed_sql(self) -> str:
        return seed_sql(self.catalog, self.rows_by_table)


def write_artifacts(out_dir, artifacts: DatasetArtifacts) -> list:
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise DatasetError(f"cannot create output directory {out}: {exc}") from None
    files = {
        "manifest.json": json.dumps({
            "format": FORMAT, "dataset": artifacts.dataset, "seed_ref": artifacts.seed_ref,
            "tables": [t.name for t in artifacts.catalog.tables], "cases": len(artifacts.cases),
        }, indent=2, sort_keys=True) + "\n",
        "schema.sql": render_catalog(artifacts.catalog),
        "annotations.csv": dump_annotations(artifacts.catalog.rules),
        "seed.sql": artifacts.seed_sql,
        "cases.jsonl": dump_jsonl(c.case_record() for c in artifacts.cases),
        "truth.jsonl": dump_jsonl(c.truth_record() for c in artifacts.cases),
    }
    for t in artifacts.catalog.tables:
        files[f"seed_{t.name}.csv"] = write_csv(t.column_names, artifacts.rows_by_table.get(t.name, []))
    written = []
    for name, text in files.items():
        path = out / name
        path.write_text(text, encoding="utf-8")
        written.append(path)
    return written


def load_artifacts(directory) -> DatasetArtifacts:
    d = Path(directory)
    manifest_path = d / "manifest.json"
    if not manifest_path.exists():
        raise DatasetError(f"not a dataset directory (no manifest.json): {d}")
    manifest = json.loads(manifest_path.read_text(encoding="utf-8"))
    if manifest.get("format") != FORMAT:
        raise DatasetError(f"unsupported dataset format {manifest.get('format')!r}")
    catalog = load_schema((d / "schema.sql").read_text(encoding="utf-8"))
    catalog = annotate_roles(catalog, load_annotations((d / "annotations.csv").read_text(encoding="utf-8")))
    rows_by_table = {}
    for t in catalog.tables:
        _, raw = read_csv(d / f"seed_{t.name}.csv")
        rows_by_table[t.name] = [{c.name: canonical_value(r[c.name] or None, c) for c in t.columns}
                                 for r in raw]
    cases = load_cases((d / "cases.jsonl").read_text(encoding="utf-8"),
                       (d / "truth.jsonl").read_text(encoding="utf-8"))
    return DatasetArtifacts(manifest["dataset"], manifest["seed_ref"], catalog, rows_by_table, cases)
