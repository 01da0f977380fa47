"""Connections, statement execution, canonical row snapshots, rollback isolation."""

from __future__ import annotations

import json
from contextlib import contextmanager
from dataclasses import dataclass, field

import psycopg
from psycopg import sql as pgsql

from castle.dialects import Dialect
from castle.errors import CastleError, ConfigError, DatabaseError, SchemaError
from castle.schema import BASE, ColumnDef, SchemaCatalog
from castle.sql.render import render_expr
from castle.values import canonical_value


class TransactionOpenError(DatabaseError):
    pass


@dataclass(frozen=True)
class ConnectionConfig:
    dsn: str
    dialect: Dialect = Dialect.POSTGRESQL
    statement_timeout: float = 30.0  # seconds


class Connection:
    """One server session, owned by a single worker at a time.

    The session runs in autocommit mode; transactions are opened explicitly
    with :meth:`transaction` or :func:`run_isolated`.
    """

    def __init__(self, raw: psycopg.Connection, dialect: Dialect):
        self.raw = raw
        self.dialect = dialect
        self.isolated = False

    def execute(self, query, params=None, *, stage: str | None = None):
        try:
            return self.raw.execute(query, params)
        except psycopg.Error as exc:
            sqlstate = getattr(exc, "sqlstate", None)
            raise DatabaseError(str(exc).strip(), sqlstate=sqlstate, stage=stage) from exc

    def query(self, query, params=None, *, stage: str | None = None) -> list:
        return self.execute(query, params, stage=stage).fetchall()

    @contextmanager
    def transaction(self):
        try:
            with self.raw.transaction():
                yield self
        except psycopg.Error as exc:
            raise DatabaseError(str(exc).strip(), sqlstate=getattr(exc, "sqlstate", None)) from exc

    def close(self) -> None:
        self.raw.close()

    def __enter__(self) -> "Connection":
        return self

    def __exit__(self, *exc) -> None:
        self.close()


def connect(config: ConnectionConfig | str) -> Connection:
    if isinstance(config, str):
        config = ConnectionConfig(config)
    dialect = Dialect.parse(config.dialect)
    if dialect is not Dialect.POSTGRESQL:
        raise ConfigError(f"no driver for dialect {dialect.value}; execution supports postgresql only")
    try:
        raw = psycopg.connect(config.dsn, autocommit=True)
    except psycopg.Error as exc:
        raise DatabaseError(f"connection failed: {exc}".strip(), sqlstate=getattr(exc, "sqlstate", None)) from exc
    if raw.info.server_version <= 0:
        raise ConfigError("server handshake did not identify a postgresql server")
    raw.execute(f"SET statement_timeout = {int(config.statement_timeout * 1000)}")
    return Connection(raw, dialect)


def execute_update(conn: Connection, composed) -> int:
    """Run a composed UPDATE in the ambient transaction; return the server's row count."""
    if Dialect.parse(composed.dialect) is not conn.dialect:
        raise ConfigError(f"statement composed for {composed.dialect} but connection is {conn.dialect.value}")
    cur = conn.execute(composed.sql_text, stage="E")
    return cur.rowcount


def execute_script(conn: Connection, text: str) -> None:
    """Execute a multi-statement script (no parameters)."""
    conn.execute(text)


# -- snapshots -----------------------------------------------------------------------

@dataclass(frozen=True)
class RowSnapshot:
    table: str
    key_columns: tuple
    columns: tuple
    rows: dict = field(default_factory=dict)  # key tuple -> {column: canonical text | None}

    def __post_init__(self):
        for key, row in self.rows.items():
            if len(key) != len(self.key_columns):
                raise ValueError(f"row key {key!r} does not match key columns")

    def cell(self, key: tuple, column: str):
        return self.rows[key][column]

    def where(self, predicate) -> "RowSnapshot":
        return RowSnapshot(self.table, self.key_columns, self.columns,
                           {k: r for k, r in self.rows.items() if predicate(r)})

    def to_json(self) -> str:
        return json.dumps({"table": self.table, "key_columns": list(self.key_columns),
                           "columns": list(self.columns),
                           "rows": [[list(k), r] for k, r in self.rows.items()]},
                          sort_keys=True, ensure_ascii=False)

    @classmethod
    def from_json(cls, text: str) -> "RowSnapshot":
        d = json.loads(text)
        return cls(d["table"], tuple(d["key_columns"]), tuple(d["columns"]),
                   {tuple(k): r for k, r in d["rows"]})


def server_table(conn: Connection, table: str) -> tuple:
    """(columns, primary key) of ``table`` as the server reports them."""
    rows = conn.query(
        "SELECT column_name, data_type, numeric_scale, is_nullable FROM information_schema.columns "
        "WHERE table_schema = current_schema() AND table_name = %s ORDER BY ordinal_position",
        (table,))
    if not rows:
        raise SchemaError(f"unknown table {table!r}")
    kinds = {"integer": "INTEGER", "bigint": "INTEGER", "smallint": "INTEGER", "numeric": "NUMERIC",
             "jsonb": "JSONB", "json": "JSONB"}
    cols = tuple(ColumnDef(name, kinds.get(dtype, "TEXT"), BASE, nullable == "YES",
                           0 if kinds.get(dtype) == "INTEGER" else scale)
                 for name, dtype, scale, nullable in rows)
    key = conn.query(
        "SELECT a.attname FROM pg_index i JOIN pg_attribute a ON a.attrelid = i.indrelid "
        "AND a.attnum = ANY(i.indkey) WHERE i.indrelid = %s::regclass AND i.indisprimary "
        "ORDER BY array_position(i.indkey, a.attnum)", (pgsql.Identifier(table).as_string(conn.raw),))
    return cols, tuple(k for (k,) in key)


def _where_text(scope, dialect) -> str | None:
    if scope is None:
        return None
    if isinstance(scope, str):
        return scope
    return render_expr(scope, dialect)


def snapshot(conn: Connection, table: str, scope=None, catalog: SchemaCatalog | None = None,
             key=None) -> RowSnapshot:
    """All rows of ``table`` (optionally filtered by a predicate) keyed and canonicalized.

    ``scope`` is SQL predicate text or an expression AST. Column scales come
    from ``catalog`` when given, else from the server's catalog. ``key``
    overrides the primary key as row identity (it must still be unique).
    """
    if catalog is not None and catalog.has_table(table):
        t = catalog.table(table)
        columns, key = t.columns, tuple(key or t.primary_key)
    else:
        columns, pk = server_table(conn, table)
        key = key or pk
    if not key:
        raise SchemaError(f"table {table!r} has no primary key to order snapshots by")
    ident = pgsql.Identifier
    query = pgsql.SQL("SELECT {} FROM {}").format(
        pgsql.SQL(", ").join(ident(c.name) for c in columns), ident(table))
    where = _where_text(scope, conn.dialect)
    if where:
        query += pgsql.SQL(" WHERE ") + pgsql.SQL(where)
    query += pgsql.SQL(" ORDER BY ") + pgsql.SQL(", ").join(ident(k) for k in key)
    names = tuple(c.name for c in columns)
    rows = {}
    for raw in conn.query(query):
        row = {c.name: canonical_value(raw[i], c) for i, c in enumerate(columns)}
        k = tuple(row[kc] for kc in key)
        if k in rows:
            raise SchemaError(f"duplicate row key {k!r} in {table}")
        rows[k] = row
    return RowSnapshot(table, tuple(key), names, rows)


def matching_keys(conn: Connection, table: str, key_columns, where, *, alias: str | None = None,
                  extra=()) -> list:
    """Read-only evaluation of an UPDATE's WHERE: keys (and ``extra`` expressions) of matching rows.

    ``where`` and ``extra`` are expression ASTs in the update's scope.
    """
    ident = pgsql.Identifier
    items = [pgsql.SQL("CAST({} AS TEXT)").format(ident(k)) for k in key_columns]
    items += [pgsql.SQL(render_expr(e, conn.dialect)) for e in extra]
    src = ident(table)
    if alias:
        src = pgsql.SQL("{} AS {}").format(src, ident(alias))
    query = pgsql.SQL("SELECT {} FROM {}").format(pgsql.SQL(", ").join(items), src)
    if where is not None:
        query += pgsql.SQL(" WHERE ") + pgsql.SQL(render_expr(where, conn.dialect))
    n = len(key_columns)
    return [(tuple(r[:n]), tuple(r[n:])) for r in conn.query(query, stage="E")]


# -- isolation -----------------------------------------------------------------------

def run_isolated(conn: Connection, body):
    """Run ``body(conn)`` in a transaction that is always rolled back."""
    if conn.isolated or conn.raw.info.transaction_status != psycopg.pq.TransactionStatus.IDLE:
        raise TransactionOpenError("transaction already open")
    conn.isolated = True
    try:
        conn.raw.execute("BEGIN")
        try:
            return body(conn)
        finally:
            conn.raw.execute("ROLLBACK")
    except psycopg.Error as exc:
        raise DatabaseError(str(exc).strip(), sqlstate=getattr(exc, "sqlstate", None)) from exc
    finally:
        conn.isolated = False


@contextmanager
def savepoint(conn: Connection, name: str = "castle_step"):
    """Statement-level recovery inside an isolated run: failure rolls back to the savepoint."""
    conn.raw.execute(f"SAVEPOINT {name}")
    try:
        yield
    except (CastleError, psycopg.Error):
        conn.raw.execute(f"ROLLBACK TO SAVEPOINT {name}")
        raise
    else:
        conn.raw.execute(f"RELEASE SAVEPOINT {name}")
