"""Schema catalog: DDL parsing, derived-column annotations, prompt rendering."""

from __future__ import annotations

import csv
import io
import re
from dataclasses import dataclass, field, replace
from pathlib import Path

from castle.dialects import Dialect
from castle.errors import SchemaError, SqlSyntaxError
from castle.sql import ast
from castle.sql.lexer import EOF, IDENT, NUMBER, QIDENT
from castle.sql.parser import Parser

BASE = "base"
DERIVED = "derived-aggregate"

_TYPES_WITH_LENGTH = {"VARCHAR"}
_TYPES_WITH_PRECISION = {"NUMERIC", "DECIMAL"}
_PLAIN_TYPES = {"SERIAL", "TEXT", "INTEGER", "JSONB"}


class DdlSyntaxError(SqlSyntaxError):
    exit_code = 2


@dataclass(frozen=True)
class ColumnDef:
    name: str
    sql_type: str
    role: str = BASE
    nullable: bool = True
    scale: int | None = None

    @property
    def kind(self) -> str:
        """Value family used for canonical comparison: integer, numeric, text or json."""
        base = self.sql_type.split("(")[0]
        if base in ("SERIAL", "INTEGER"):
            return "integer"
        if base in _TYPES_WITH_PRECISION:
            return "numeric"
        if base == "JSONB":
            return "json"
        return "text"


@dataclass(frozen=True)
class TableSchema:
    name: str
    columns: tuple
    primary_key: tuple

    def __post_init__(self):
        names = [c.name for c in self.columns]
        dupes = {n for n in names if names.count(n) > 1}
        if dupes:
            raise SchemaError(f"duplicate column(s) {sorted(dupes)} in table {self.name!r}")
        if not self.primary_key:
            raise SchemaError(f"table {self.name!r} has no primary key")
        for k in self.primary_key:
            if k not in names:
                raise SchemaError(f"primary key column {k!r} not found in table {self.name!r}")

    @property
    def column_names(self) -> tuple:
        return tuple(c.name for c in self.columns)

    def column(self, name: str) -> ColumnDef:
        for c in self.columns:
            if c.name == name:
                return c
        raise SchemaError(f"unknown column {name!r} in table {self.name!r}")

    def has_column(self, name: str) -> bool:
        return any(c.name == name for c in self.columns)

    def structure(self) -> tuple:
        """Names, types, key and order; what a DDL round trip must preserve."""
        return (self.name, tuple((c.name, c.sql_type, c.nullable, c.scale) for c in self.columns),
                self.primary_key)


@dataclass(frozen=True)
class AggregationRule:
    """``column = <aggregate expression> [from <source>] group by <keys>``.

    Without ``from`` the aggregate runs over the rule's own table (e.g. squad
    size counted per club). The group-by columns must exist under the same
    names in both the source table and the annotated table.
    """

    table: str
    column: str
    expression: str
    source_table: str
    group_by: tuple
    expr: object = field(compare=False, repr=False, default=None)

    @classmethod
    def parse(cls, text: str, table: str | None = None, column: str | None = None) -> "AggregationRule":
        p = Parser(text)
        named = p.peek().kind in (IDENT, QIDENT)
        prefixed = named and (p.peek(1).is_op("=") or (
            p.peek(1).is_op(".") and p.peek(2).kind in (IDENT, QIDENT) and p.peek(3).is_op("=")))
        if column is None and not prefixed:
            raise SchemaError(f"rule {text!r} must start with '<column> ='")
        if prefixed:
            # optional "[table.]column =" prefix
            first = p.identifier("column name")
            if p.accept_op("."):
                table, first = first, p.identifier("column name")
            p.expect_op("=")
            if column is not None and column != first:
                raise SchemaError(f"rule names column {first!r} but is attached to {column!r}")
            column = first
        if table is None:
            raise SchemaError(f"rule {text!r} does not name its table")
        start = p.peek().pos
        expr = p.expr()
        expression = text[start:p.peek().pos].strip()
        source = table
        if p.accept_kw("FROM"):
            source = p.identifier("table name")
        p.expect_kw("GROUP")
        p.expect_kw("BY")
        keys = [p.identifier("column name")]
        while p.accept_op(","):
            keys.append(p.identifier("column name"))
        if not p.at_end():
            raise p.error("unexpected trailing input in aggregation rule")
        if not any(ast.is_aggregate(n) for n in ast.walk(expr)):
            raise SchemaError(f"rule for {column!r} contains no aggregate: {expression!r}")
        return cls(table, column, expression, source, tuple(keys), expr)

    def referenced_columns(self) -> set:
        return {n.name for n in ast.walk(self.expr) if isinstance(n, ast.Column)}

    def text(self) -> str:
        src = f" from {self.source_table}" if self.source_table != self.table else ""
        return f"{self.column} = {self.expression}{src} group by {', '.join(self.group_by)}"


@dataclass(frozen=True)
class SchemaCatalog:
    tables: tuple = ()
    dialect: Dialect = Dialect.POSTGRESQL
    rules: tuple = ()

    def __post_init__(self):
        names = [t.name for t in self.tables]
        dupes = sorted({n for n in names if names.count(n) > 1})
        if dupes:
            raise SchemaError(f"duplicate table name(s): {', '.join(dupes)}")

    def table(self, name: str) -> TableSchema:
        for t in self.tables:
            if t.name == name:
                return t
        raise SchemaError(f"unknown table {name!r}")

    def has_table(self, name: str) -> bool:
        return any(t.name == name for t in self.tables)

    def derived_columns(self, table: str) -> list:
        return [c.name for c in self.table(table).columns if c.role == DERIVED]

    def rule_for(self, table: str, column: str) -> AggregationRule | None:
        for r in self.rules:
            if r.table == table and r.column == column:
                return r
        return None

    def rules_for(self, table: str) -> list:
        order = {c: i for i, c in enumerate(self.table(table).column_names)}
        return sorted((r for r in self.rules if r.table == table), key=lambda r: order[r.column])


# -- DDL parsing ------------------------------------------------------------------

class _DdlParser(Parser):
    def error(self, message, tok=None):
        err = super().error(message, tok)
        return DdlSyntaxError(message, line=err.line, col=err.col, token=err.token)

    def create_table(self) -> TableSchema:
        self.expect_kw("CREATE")
        self.expect_kw("TABLE")
        if self.accept_kw("IF"):
            self.expect_kw("NOT")
            self.expect_kw("EXISTS")
        name = self.ddl_identifier("table name")
        self.expect_op("(")
        columns: list = []
        pk: list = []
        while True:
            if self.peek().is_kw("PRIMARY"):
                self.advance()
                self.expect_kw("KEY")
                if pk:
                    raise self.error("multiple primary keys")
                self.expect_op("(")
                pk.append(self.ddl_identifier("column name"))
                while self.accept_op(","):
                    pk.append(self.ddl_identifier("column name"))
                self.expect_op(")")
            else:
                col, inline_pk = self.column_def()
                if inline_pk:
                    if pk:
                        raise self.error("multiple primary keys")
                    pk.append(col.name)
                columns.append(col)
            if self.accept_op(")"):
                break
            self.expect_op(",")
        if not pk:
            raise self.error(f"table {name!r} declares no PRIMARY KEY")
        columns = [replace(c, nullable=False) if c.name in pk else c for c in columns]
        try:
            return TableSchema(name, tuple(columns), tuple(pk))
        except SchemaError as exc:
            raise self.error(str(exc)) from None

    def ddl_identifier(self, what: str) -> str:
        tok = self.peek()
        if tok.kind == QIDENT:
            self.advance()
            return tok.value
        if tok.kind == IDENT:
            self.advance()
            return tok.value.lower()
        raise self.error(f"expected {what}")

    def column_def(self) -> tuple:
        name = self.ddl_identifier("column name")
        tok = self.peek()
        if tok.kind != IDENT:
            raise self.error("expected column type")
        base = tok.value.upper()
        self.advance()
        scale = None
        if base in _PLAIN_TYPES:
            sql_type = base
            scale = 0 if base in ("SERIAL", "INTEGER") else None
        elif base in _TYPES_WITH_LENGTH:
            self.expect_op("(")
            n = self.number()
            self.expect_op(")")
            sql_type = f"{base}({n})"
        elif base in _TYPES_WITH_PRECISION:
            sql_type = base
            if self.accept_op("("):
                p = self.number()
                s = 0
                if self.accept_op(","):
                    s = self.number()
                self.expect_op(")")
                if s > p:
                    raise self.error(f"scale {s} exceeds precision {p}")
                sql_type = f"{base}({p},{s})"
                scale = s
            elif base == "DECIMAL":
                scale = 0
        else:
            raise self.error(f"unsupported column type {tok.value}", tok)
        nullable, inline_pk = True, False
        while True:
            if self.accept_kw("PRIMARY"):
                self.expect_kw("KEY")
                inline_pk = True
            elif self.peek().is_kw("NOT") and self.peek(1).is_kw("NULL"):
                self.advance()
                self.advance()
                nullable = False
            elif self.accept_kw("NULL"):
                nullable = True
            else:
                break
        return ColumnDef(name, sql_type, BASE, nullable, scale), inline_pk

    def number(self) -> int:
        tok = self.peek()
        if tok.kind != NUMBER or not tok.value.isdigit():
            raise self.error("expected integer")
        self.advance()
        return int(tok.value)


def load_schema(ddl_text: str, dialect: Dialect | str = Dialect.POSTGRESQL) -> SchemaCatalog:
    """Parse one or more ``CREATE TABLE`` statements into a catalog."""
    dialect = Dialect.parse(dialect)
    p = _DdlParser(ddl_text, dialect)
    tables: list = []
    seen: set = set()
    while not p.at_end():
        if p.accept_op(";"):
            continue
        start = p.peek()
        table = p.create_table()
        if table.name in seen:
            raise DdlSyntaxError(f"duplicate table name {table.name!r}", line=start.line,
                                 col=start.col, token=table.name)
        seen.add(table.name)
        tables.append(table)
        if not p.peek().kind == EOF:
            p.expect_op(";")
    return SchemaCatalog(tuple(tables), dialect)


def load_schema_file(path: str | Path, dialect: Dialect | str = Dialect.POSTGRESQL) -> SchemaCatalog:
    return load_schema(Path(path).read_text(encoding="utf-8"), dialect)


# -- annotations ----------------------------------------------------------------

def annotate_roles(catalog: SchemaCatalog, rules) -> SchemaCatalog:
    """Mark annotated columns as derived aggregates; everything else stays base."""
    parsed = [r if isinstance(r, AggregationRule) else AggregationRule.parse(r) for r in rules]
    if not parsed:
        return catalog
    by_table: dict = {}
    for rule in parsed:
        if not catalog.has_table(rule.table):
            raise SchemaError(f"rule for {rule.column!r} names unknown table {rule.table!r}")
        table = catalog.table(rule.table)
        if not table.has_column(rule.column):
            raise SchemaError(f"rule names unknown column {rule.column!r} in table {rule.table!r}")
        if not catalog.has_table(rule.source_table):
            raise SchemaError(f"rule for {rule.column!r} reads unknown table {rule.source_table!r}")
        source = catalog.table(rule.source_table)
        for key in rule.group_by:
            for t in {table, source}:
                if not t.has_column(key):
                    raise SchemaError(f"rule for {rule.column!r} groups by unknown column "
                                      f"{t.name}.{key}")
        for ref in sorted(rule.referenced_columns()):
            if not source.has_column(ref):
                raise SchemaError(f"rule for {rule.column!r} references unknown column "
                                  f"{source.name}.{ref}")
        if rule.column in rule.group_by:
            raise SchemaError(f"derived column {rule.column!r} cannot be its own group key")
        by_table.setdefault(rule.table, set()).add(rule.column)
    existing = {(r.table, r.column) for r in catalog.rules}
    for rule in parsed:
        if (rule.table, rule.column) in existing:
            raise SchemaError(f"column {rule.table}.{rule.column} already has a rule")
        existing.add((rule.table, rule.column))
    tables = []
    for t in catalog.tables:
        derived = by_table.get(t.name, set())
        cols = tuple(replace(c, role=DERIVED) if c.name in derived else c for c in t.columns)
        tables.append(replace(t, columns=cols))
    return replace(catalog, tables=tuple(tables), rules=catalog.rules + tuple(parsed))


def load_annotations(text: str) -> list:
    """Read the ``table,column,rule`` sidecar (CSV with header)."""
    reader = csv.DictReader(io.StringIO(text))
    missing = {"table", "column", "rule"} - set(reader.fieldnames or ())
    if missing:
        raise SchemaError(f"annotation file lacks column(s): {', '.join(sorted(missing))}")
    rules = []
    for row in reader:
        if not (row["table"] or "").strip():
            continue
        rules.append(AggregationRule.parse(row["rule"].strip(), table=row["table"].strip(),
                                           column=row["column"].strip()))
    return rules


def load_annotations_file(path: str | Path) -> list:
    return load_annotations(Path(path).read_text(encoding="utf-8"))


def dump_annotations(rules) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["table", "column", "rule"])
    for r in rules:
        src = f" from {r.source_table}" if r.source_table != r.table else ""
        w.writerow([r.table, r.column, f"{r.expression}{src} group by {', '.join(r.group_by)}"])
    return buf.getvalue()


# -- rendering ------------------------------------------------------------------

_BARE = re.compile(r"^[a-z_][a-z0-9_]*$")


def ddl_ident(name: str) -> str:
    if _BARE.match(name):
        return name
    return '"' + name.replace('"', '""') + '"'


def render_table(table: TableSchema) -> str:
    composite = len(table.primary_key) > 1
    lines = []
    for c in table.columns:
        line = f"    {ddl_ident(c.name)} {c.sql_type}"
        if not composite and c.name in table.primary_key:
            line += " PRIMARY KEY"
        elif not c.nullable and c.name not in table.primary_key:
            line += " NOT NULL"
        lines.append(line)
    if composite:
        lines.append(f"    PRIMARY KEY ({', '.join(ddl_ident(k) for k in table.primary_key)})")
    body = ",\n".join(lines)
    return f"CREATE TABLE IF NOT EXISTS {ddl_ident(table.name)} (\n{body}\n);"


def render_schema_prompt(catalog: SchemaCatalog, table: str) -> str:
    """Canonical DDL text substituted into a prompt's schema slot."""
    return render_table(catalog.table(table))


def render_catalog(catalog: SchemaCatalog) -> str:
    return "\n\n".join(render_table(t) for t in catalog.tables) + "\n"
