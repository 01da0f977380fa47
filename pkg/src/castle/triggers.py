"""Trigger discovery, coverage checks, generation through the gateway, and deployment.

Which derived columns a trigger maintains is not visible in the database
catalog, so every deployment is recorded in a ledger table
(``castle_trigger_ledger``); coverage is read from the ledger, existence from
the catalog.
"""

from __future__ import annotations

import hashlib
import re
from dataclasses import dataclass
from importlib import resources

from castle.dialects import Dialect
from castle.errors import (CastleError, DatabaseError, SchemaError, SqlSyntaxError,
                           TriggerGenerationError, ValidationError)
from castle.llm import ModelRequest, extract_sql
from castle.prompts import build_trigger_prompt
from castle.schema import DERIVED, SchemaCatalog
from castle.sql.lexer import DOLLAR, EOF, IDENT, QIDENT, split_statements
from castle.sql.parser import Parser

LEDGER_TABLE = "castle_trigger_ledger"

# Catalog queries per dialect. The postgresql pair is used as written; the
# on-table query takes the table name as a parameter.
CATALOG_QUERIES = {
    Dialect.POSTGRESQL: {
        "list_all": (
            "SELECT event_object_table AS table_name, trigger_name\n"
            "FROM information_schema.triggers\n"
            "GROUP BY table_name, trigger_name\n"
            "ORDER BY table_name, trigger_name;"),
        "on_table": (
            "SELECT tgname\n"
            "FROM pg_trigger\n"
            "WHERE tgrelid = %s::regclass;"),
    },
    Dialect.MYSQL: {
        "list_all": ("SELECT EVENT_OBJECT_TABLE AS table_name, TRIGGER_NAME AS trigger_name "
                     "FROM information_schema.TRIGGERS ORDER BY table_name, trigger_name;"),
        "on_table": ("SELECT TRIGGER_NAME FROM information_schema.TRIGGERS "
                     "WHERE EVENT_OBJECT_TABLE = %s;"),
    },
    Dialect.SQLSERVER: {
        "list_all": ("SELECT OBJECT_NAME(parent_id) AS table_name, name AS trigger_name "
                     "FROM sys.triggers ORDER BY table_name, trigger_name;"),
        "on_table": "SELECT name FROM sys.triggers WHERE parent_id = OBJECT_ID(%s);",
    },
}


def ledger_migration() -> str:
    return resources.files("castle.migrations").joinpath("001_trigger_ledger.sql").read_text()


@dataclass(frozen=True)
class TriggerInfo:
    name: str
    table: str
    timing_event: str
    source: str | None = None
    function_name: str | None = None
    target_table: str | None = None  # from the ledger; None when not deployed by us
    covered_columns: tuple = ()
    watched_columns: tuple = ()
    group_columns: tuple = ()


@dataclass(frozen=True)
class TriggerScript:
    target_table: str
    covered_columns: tuple
    function_sql: str
    trigger_sql: str
    dialect: Dialect
    event_table: str
    function_name: str
    trigger_name: str
    watched_columns: tuple = ()
    group_columns: tuple = ()

    @property
    def digest(self) -> str:
        return hashlib.sha256((self.function_sql + "\n" + self.trigger_sql).encode()).hexdigest()[:16]


# -- DDL header parsing --------------------------------------------------------------

@dataclass(frozen=True)
class FunctionHeader:
    name: str
    name_span: tuple
    or_replace: bool
    create_end: int  # offset just after CREATE, for inserting OR REPLACE


@dataclass(frozen=True)
class TriggerHeader:
    name: str
    name_span: tuple
    timing: str
    events: tuple
    update_columns: tuple
    table: str
    for_each_row: bool
    when: object
    function_name: str


class _DdlHeaderParser(Parser):
    def name_token(self):
        tok = self.peek()
        if tok.kind not in (IDENT, QIDENT):
            raise self.error("expected a name")
        self.advance()
        name = tok.value if tok.kind == QIDENT else tok.value.lower()
        if self.accept_op("."):  # schema-qualified
            tok = self.peek()
            self.identifier()
            name = tok.value if tok.kind == QIDENT else tok.value.lower()
        return name, (tok.pos, tok.end)

    def function_ddl(self) -> FunctionHeader:
        create = self.expect_kw("CREATE")
        or_replace = bool(self.accept_kw("OR"))
        if or_replace:
            self.expect_kw("REPLACE")
        self.expect_kw("FUNCTION")
        name, span = self.name_token()
        self.expect_op("(")
        self.expect_op(")")
        self.expect_kw("RETURNS")
        self.expect_kw("TRIGGER")
        seen_body = seen_lang = False
        while not self.at_end() and not self.peek().is_op(";"):
            if self.accept_kw("AS"):
                if self.peek().kind != DOLLAR:
                    raise self.error("expected a dollar-quoted function body")
                self.advance()
                seen_body = True
            elif self.accept_kw("LANGUAGE"):
                self.identifier("language name")
                seen_lang = True
            else:
                raise self.error("unexpected token in function definition")
        if not seen_body:
            raise self.error("function has no body")
        if not seen_lang:
            raise self.error("function has no LANGUAGE clause")
        self.finish()
        return FunctionHeader(name, span, or_replace, create.end)

    def trigger_ddl(self) -> TriggerHeader:
        self.expect_kw("CREATE")
        if self.accept_kw("OR"):
            self.expect_kw("REPLACE")
        self.expect_kw("TRIGGER")
        name, span = self.name_token()
        timing = self.expect_kw("BEFORE", "AFTER", "INSTEAD").value.upper()
        if timing == "INSTEAD":
            self.expect_kw("OF")
        events, columns = [], []
        while True:
            ev = self.expect_kw("INSERT", "UPDATE", "DELETE", "TRUNCATE").value.upper()
            events.append(ev)
            if ev == "UPDATE" and self.accept_kw("OF"):
                columns.append(self.identifier("column name"))
                while self.accept_op(","):
                    columns.append(self.identifier("column name"))
            if not self.accept_kw("OR"):
                break
        self.expect_kw("ON")
        table, _ = self.name_token()
        row = False
        if self.accept_kw("FOR"):
            self.accept_kw("EACH")
            row = self.expect_kw("ROW", "STATEMENT").value.upper() == "ROW"
        when = None
        if self.accept_kw("WHEN"):
            self.expect_op("(")
            when = self.expr()
            self.expect_op(")")
        self.expect_kw("EXECUTE")
        self.expect_kw("FUNCTION", "PROCEDURE")
        fname, _ = self.name_token()
        self.expect_op("(")
        self.expect_op(")")
        self.finish()
        return TriggerHeader(name, span, timing, tuple(events), tuple(columns), table, row, when, fname)


def parse_function_header(text: str) -> FunctionHeader:
    return _DdlHeaderParser(text).function_ddl()


def parse_trigger_header(text: str) -> TriggerHeader:
    return _DdlHeaderParser(text).trigger_ddl()


def _kind(statement: str) -> str:
    p = Parser(statement)
    words = []
    while len(words) < 4 and p.peek().kind != EOF:
        words.append(p.advance().value.upper())
    if words[:1] == ["CREATE"]:
        rest = words[1:]
        if rest[:2] == ["OR", "REPLACE"]:
            rest = rest[2:]
        if rest[:1] == ["FUNCTION"]:
            return "function"
        if rest[:1] == ["TRIGGER"]:
            return "trigger"
    if words[:2] == ["DROP", "TRIGGER"] or words[:2] == ["DROP", "FUNCTION"]:
        return "drop"
    return "other"


def _all_blocks(raw: str) -> str:
    """Every fenced block joined, or the extracted statement when there are none."""
    blocks = re.findall(r"```[^\n`]*\n(.*?)```", raw, re.S)
    if blocks:
        return "\n".join(b.strip().rstrip(";") + ";" for b in blocks if b.strip())
    return extract_sql(raw).statement


def trigger_name_for(table: str, columns) -> str:
    h = hashlib.sha256(",".join(sorted(columns)).encode()).hexdigest()[:8]
    return f"castle_{table}_{h}"


def script_from_sql(text: str, catalog: SchemaCatalog, target_table: str, columns,
                    dialect: Dialect | str = Dialect.POSTGRESQL) -> TriggerScript:
    """Validate a function + trigger pair and bind it to ``columns`` of ``target_table``.

    The trigger is renamed to the ``castle_<table>_<hash>`` convention and a
    plain CREATE FUNCTION becomes CREATE OR REPLACE so redeployment is idempotent.
    """
    dialect = Dialect.parse(dialect)
    statements = [s for s, _ in split_statements(text)]
    kinds = [_kind(s) for s in statements]
    funcs = [s for s, k in zip(statements, kinds) if k == "function"]
    trigs = [s for s, k in zip(statements, kinds) if k == "trigger"]
    other = [s for s, k in zip(statements, kinds) if k == "other"]
    if len(funcs) != 1 or len(trigs) != 1:
        raise ValidationError(f"expected one CREATE FUNCTION and one CREATE TRIGGER, "
                              f"found {len(funcs)} and {len(trigs)}", stage="T")
    if other:
        raise ValidationError("unexpected statement besides the function and trigger", stage="T")
    fsql, tsql = funcs[0], trigs[0]
    fh = parse_function_header(fsql)
    th = parse_trigger_header(tsql)
    if th.function_name != fh.name:
        raise ValidationError(f"trigger executes {th.function_name}() but the function is {fh.name}()",
                              stage="T")
    if th.timing != "AFTER" or not th.for_each_row:
        raise ValidationError("trigger must be AFTER ... FOR EACH ROW", stage="T")
    if not catalog.has_table(th.table):
        raise ValidationError(f"trigger is on unknown table {th.table!r}", stage="T")
    event_table = catalog.table(th.table)
    for col in th.update_columns:
        if not event_table.has_column(col):
            raise ValidationError(f"trigger watches unknown column {th.table}.{col}", stage="T")
    target = catalog.table(target_table)
    columns = tuple(columns)
    for col in columns:
        if not target.has_column(col) or target.column(col).role != DERIVED:
            raise ValidationError(f"{target_table}.{col} is not a derived column", stage="T")
    if "UPDATE" in th.events:
        watched = th.update_columns or event_table.column_names
    else:
        watched = ()
    groups = []
    for col in columns:
        rule = catalog.rule_for(target_table, col)
        groups.extend(rule.group_by)
    name = trigger_name_for(target_table, columns)
    tsql = tsql[:th.name_span[0]] + name + tsql[th.name_span[1]:]
    if not fh.or_replace:
        fsql = fsql[:fh.create_end] + " OR REPLACE" + fsql[fh.create_end:]
    return TriggerScript(target_table, columns, fsql + ";", tsql + ";", dialect, th.table, fh.name,
                         name, tuple(watched), tuple(dict.fromkeys(groups)))


# -- catalog access ------------------------------------------------------------------

def _ledger_exists(conn) -> bool:
    return conn.query("SELECT to_regclass(%s) IS NOT NULL", (LEDGER_TABLE,))[0][0]


def _ledger_rows(conn) -> dict:
    if not _ledger_exists(conn):
        return {}
    rows = conn.query(f"SELECT trigger_name, target_table, event_table, covered_columns, "
                      f"watched_columns, group_columns FROM {LEDGER_TABLE}")
    return {r[0]: r[1:] for r in rows}


def list_all_triggers(conn) -> list:
    """(table_name, trigger_name) for every trigger in the database."""
    return [tuple(r) for r in conn.query(CATALOG_QUERIES[conn.dialect]["list_all"])]


def list_triggers(conn, table: str) -> list:
    """Triggers defined on ``table``, with ledger coverage where we deployed them."""
    names = [r[0] for r in conn.query(CATALOG_QUERIES[conn.dialect]["on_table"], (table,))]
    ledger = _ledger_rows(conn)
    out = []
    for name in sorted(names):
        row = conn.query(
            "SELECT t.tgisinternal, pg_get_triggerdef(t.oid), p.proname FROM pg_trigger t "
            "JOIN pg_proc p ON p.oid = t.tgfoid WHERE t.tgrelid = %s::regclass AND t.tgname = %s",
            (table, name))[0]
        if row[0]:
            continue
        out.append(_info(name, table, row[1], row[2], ledger.get(name)))
    return out


def _info(name, table, source, function, entry) -> TriggerInfo:
    head = source.split(" ON ", 1)[0]
    timing_event = head.split(name, 1)[-1].strip() if name in head else head
    if entry is None:
        return TriggerInfo(name, table, timing_event, source, function)
    target, _event, covered, watched, groups = entry
    return TriggerInfo(name, table, timing_event, source, function, target, tuple(covered),
                       tuple(watched), tuple(groups))


def covering_triggers(conn, table: str) -> list:
    """Deployed triggers (on any table) whose ledger entry targets ``table``."""
    ledger = _ledger_rows(conn)
    events = sorted({entry[1] for entry in ledger.values() if entry[0] == table})
    return [t for ev in events for t in list_triggers(conn, ev) if t.target_table == table]


def verify_coverage(triggers, catalog: SchemaCatalog, table: str) -> list:
    """Derived columns of ``table`` not maintained by any trigger, in schema order."""
    covered = set()
    for t in triggers:
        if t.target_table in (None, table):
            covered.update(t.covered_columns)
    return [c for c in catalog.derived_columns(table) if c not in covered]


# -- generation and deployment -------------------------------------------------------

def generate_trigger(provider, schema_text: str, table: str, columns, catalog: SchemaCatalog, *,
                     model_name: str = "scripted", dialect: Dialect | str = Dialect.POSTGRESQL,
                     attempts: int = 3, temperature: float = 0.0) -> TriggerScript:
    """Ask the model for a trigger maintaining ``columns``; retry on unusable output."""
    columns = list(columns)
    if not columns:
        raise TriggerGenerationError("no derived columns requested")
    target = catalog.table(table)
    for col in columns:
        if not target.has_column(col) or target.column(col).role != DERIVED:
            raise ValidationError(f"{table}.{col} is not a derived column", stage="T")
    rules = [catalog.rule_for(table, c) for c in columns]
    prompt = build_trigger_prompt(schema_text, table, columns, rules, dialect=Dialect.parse(dialect).value)
    request = ModelRequest(model_name, prompt, temperature, template_id="trigger_gen",
                           instruction_id=f"{table}:{','.join(columns)}")
    last, problem = "", ""
    for _ in range(max(1, attempts)):
        response = provider.complete(request)
        last = response.raw_text
        try:
            return script_from_sql(_all_blocks(last), catalog, table, columns, dialect)
        except (SqlSyntaxError, ValidationError, CastleError) as exc:
            problem = str(exc)
    raise TriggerGenerationError(f"no usable trigger after {attempts} attempts: {problem}", last)


def deploy_trigger(conn, script: TriggerScript) -> bool:
    """Install function, trigger and ledger entry in one transaction (drop-and-recreate)."""
    ident = f'"{script.trigger_name}"'
    try:
        with conn.transaction():
            conn.execute("SELECT pg_advisory_xact_lock(hashtext('castle_trigger_deploy'))")
            conn.execute(ledger_migration())
            conn.execute(script.function_sql)
            conn.execute(f'DROP TRIGGER IF EXISTS {ident} ON "{script.event_table}"')
            conn.execute(script.trigger_sql)
            conn.execute(
                f"INSERT INTO {LEDGER_TABLE} (trigger_name, target_table, event_table, covered_columns, "
                "watched_columns, group_columns, function_name, digest) VALUES (%s,%s,%s,%s,%s,%s,%s,%s) "
                "ON CONFLICT (trigger_name) DO UPDATE SET target_table = EXCLUDED.target_table, "
                "event_table = EXCLUDED.event_table, covered_columns = EXCLUDED.covered_columns, "
                "watched_columns = EXCLUDED.watched_columns, group_columns = EXCLUDED.group_columns, "
                "function_name = EXCLUDED.function_name, digest = EXCLUDED.digest",
                (script.trigger_name, script.target_table, script.event_table,
                 list(script.covered_columns), list(script.watched_columns),
                 list(script.group_columns), script.function_name, script.digest))
    except DatabaseError as exc:
        exc.stage = "T"
        raise
    return True


def ensure_coverage(conn, provider, catalog: SchemaCatalog, table: str, columns, *,
                    schema_text: str, model_name: str = "scripted", attempts: int = 3) -> dict:
    """Check coverage of ``columns`` and generate + deploy one trigger for the missing ones."""
    missing = [c for c in verify_coverage(covering_triggers(conn, table), catalog, table) if c in set(columns)]
    deployed = None
    if missing:
        script = generate_trigger(provider, schema_text, table, missing, catalog,
                                  model_name=model_name, dialect=conn.dialect, attempts=attempts)
        deploy_trigger(conn, script)
        deployed = script.trigger_name
    return {"missing": missing, "deployed": deployed}


def require_table(catalog: SchemaCatalog, table: str) -> None:
    if not catalog.has_table(table):
        raise SchemaError(f"unknown table {table!r}")
