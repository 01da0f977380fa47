"""The six-stage update pipeline: C, A, S, T, L, E.

C  prompt the model with the schema and instruction, parse its UPDATE
A  partition SET columns into direct, cascade and derived groups
S  validate every subquery (cardinality and dialect)
T  make sure derived columns touched by the update are trigger-maintained
L  compose one canonical statement for the dialect
E  execute it

The ``baseline`` and ``multisql`` methods only run C and E: the model's
statement is executed as written, as those prompting strategies do.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from castle.dialects import Dialect
from castle.errors import CastleError, PolicyError, ValidationError
from castle.forge import (ComposedUpdate, UpdateTargetSet, classify_assignments, compose_update,
                          mentioned_columns, parse_update, subquery_plans, validate_subquery)
from castle.llm import ModelRequest, extract_sql
from castle.prompts import build_prompt, load_template, render_sample_rows
from castle.schema import DERIVED, SchemaCatalog, render_schema_prompt, render_table

METHODS = ("castle", "baseline", "multisql")

# Columns the castle and multisql templates name in their fixed directive line.
TEMPLATE_DIRECTIVES = {"player_record": ("club_name", "club_code")}


@dataclass(frozen=True)
class PipelineOptions:
    method: str = "castle"
    model_name: str = "scripted"
    dialect: Dialect = Dialect.POSTGRESQL
    temperature: float = 0.0
    max_tokens: int = 2048
    timeout: float = 60.0
    template_dir: str | None = None
    trigger_attempts: int = 3

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"unknown method {self.method!r}")


@dataclass
class Generation:
    """Outcome of stage C for one instruction."""

    prompt: str
    raw_text: str
    sql: str
    skeleton: object


@dataclass
class Plan:
    """Outcome of stages A, S and T; input to L."""

    generation: Generation
    targets: UpdateTargetSet
    reports: list = field(default_factory=list)
    maintained: tuple = ()        # derived columns that need trigger coverage
    triggers: dict = field(default_factory=dict)
    dropped: tuple = ()           # derived placeholders left to triggers


def _stage(exc: CastleError, stage: str) -> CastleError:
    if exc.stage is None:
        exc.stage = stage
    return exc


def directive_columns(method: str, table: str) -> tuple:
    return TEMPLATE_DIRECTIVES.get(table, ()) if method in ("castle", "multisql") else ()


def build_method_prompt(options: PipelineOptions, catalog: SchemaCatalog, table: str, instruction,
                        sample_rows: str | None = None) -> str:
    template = load_template(options.method, options.template_dir)
    sample = sample_rows if options.method == "multisql" else None
    if options.method == "multisql" and sample is None:
        raise CastleError("multisql needs sample rows", stage="C")
    return build_prompt(template, render_schema_prompt(catalog, table), instruction, sample)


def generate(provider, options: PipelineOptions, catalog: SchemaCatalog, table: str, instruction, *,
             sample_rows: str | None = None) -> Generation:
    """Stage C: prompt, call the model, extract and parse one UPDATE."""
    try:
        prompt = build_method_prompt(options, catalog, table, instruction, sample_rows)
        request = ModelRequest(options.model_name, prompt, options.temperature, options.max_tokens,
                               options.timeout, template_id=options.method,
                               instruction_id=getattr(instruction, "case_id", "adhoc"))
        response = provider.complete(request)
        sql = extract_sql(response)
        skeleton = parse_update(sql.statement, options.dialect)
    except CastleError as exc:
        raise _stage(exc, "C") from None
    if skeleton.table != table:
        raise PolicyError(f"statement updates {skeleton.table!r}, expected {table!r}", stage="C")
    return Generation(prompt, response.raw_text, sql.statement, skeleton)


def touched_derived(catalog: SchemaCatalog, skeleton) -> tuple:
    """Derived columns of the updated table whose rule reads a column the update writes."""
    table = skeleton.table
    written = set(skeleton.columns)
    out = []
    for rule in catalog.rules_for(table):
        reads = set(rule.group_by) | rule.referenced_columns()
        if rule.column in written or (rule.source_table == table and reads & written):
            out.append(rule.column)
    return tuple(out)


def plan(generation: Generation, options: PipelineOptions, catalog: SchemaCatalog, instruction) -> Plan:
    """Stages A and S."""
    sk = generation.skeleton
    table = catalog.table(sk.table)
    text = getattr(instruction, "text", instruction)
    mentions = mentioned_columns(text, table, directive_columns(options.method, sk.table))
    targets = classify_assignments(sk, instruction, catalog, mentions)
    reports = []
    try:
        for p in subquery_plans(sk):
            report = validate_subquery(p, options.dialect, catalog)
            reports.append(report)
            if not report.accepted:
                raise ValidationError(f"subquery for {report.column!r} rejected: {report.reason}", stage="S")
    except CastleError as exc:
        raise _stage(exc, "S") from None
    return Plan(generation, targets, reports, touched_derived(catalog, sk))


def trigger_schema_text(catalog: SchemaCatalog, table: str) -> str:
    """DDL of the target table and every table its rules read."""
    names = [table] + [r.source_table for r in catalog.rules_for(table)]
    return "\n\n".join(render_table(catalog.table(n)) for n in dict.fromkeys(names))


def maintain(conn, provider, options: PipelineOptions, catalog: SchemaCatalog, the_plan: Plan) -> Plan:
    """Stage T: check (and on a live connection, fill) trigger coverage."""
    from castle.triggers import covering_triggers, ensure_coverage, verify_coverage

    table = the_plan.generation.skeleton.table
    wanted = the_plan.maintained
    if not wanted:
        return the_plan
    try:
        if conn is None:
            the_plan.triggers = {"missing": list(wanted), "deployed": None, "checked": False}
        else:
            result = ensure_coverage(conn, provider, catalog, table, wanted,
                                     schema_text=trigger_schema_text(catalog, table),
                                     model_name=options.model_name, attempts=options.trigger_attempts)
            still = verify_coverage(covering_triggers(conn, table), catalog, table)
            the_plan.triggers = {**result, "checked": True, "uncovered": [c for c in wanted if c in still]}
    except CastleError as exc:
        raise _stage(exc, "T") from None
    return the_plan


def compose(the_plan: Plan, options: PipelineOptions, catalog: SchemaCatalog) -> ComposedUpdate:
    """Stage L. Derived placeholders are dropped when a trigger maintains the column."""
    sk = the_plan.generation.skeleton
    if options.method != "castle":
        return ComposedUpdate(sk, options.dialect, the_plan.generation.sql)
    table = catalog.table(sk.table)
    uncovered = set(the_plan.triggers.get("uncovered", the_plan.triggers.get("missing", ()))) \
        if the_plan.triggers.get("checked") else set()
    drop = tuple(c for c in sk.placeholders()
                 if table.has_column(c) and table.column(c).role == DERIVED and c not in uncovered)
    the_plan.dropped = drop
    try:
        return compose_update(sk.without(drop), {}, options.dialect, catalog)
    except CastleError as exc:
        raise _stage(exc, "L") from None


def execute(conn, composed: ComposedUpdate) -> int:
    """Stage E."""
    from castle.db import execute_update

    try:
        return execute_update(conn, composed)
    except CastleError as exc:
        raise _stage(exc, "E") from None


@dataclass
class PipelineResult:
    generation: Generation
    plan: Plan | None
    composed: ComposedUpdate
    rowcount: int | None = None


def run_pipeline(provider, options: PipelineOptions, catalog: SchemaCatalog, table: str, instruction, *,
                 conn=None, dry_run: bool = False, sample_rows: str | None = None) -> PipelineResult:
    """Run C through E once (C through L with ``dry_run``)."""
    if options.method == "multisql" and sample_rows is None and conn is not None:
        sample_rows = fetch_sample_rows(conn, catalog, table)
    generation = generate(provider, options, catalog, table, instruction, sample_rows=sample_rows)
    the_plan = None
    if options.method == "castle":
        the_plan = plan(generation, options, catalog, instruction)
        maintain(None if dry_run else conn, provider, options, catalog, the_plan)
        composed = compose(the_plan, options, catalog)
    else:
        composed = ComposedUpdate(generation.skeleton, options.dialect, generation.sql)
    rowcount = None
    if not dry_run:
        if conn is None:
            raise CastleError("no database connection for execution", stage="E")
        rowcount = execute(conn, composed)
    return PipelineResult(generation, the_plan, composed, rowcount)


def fetch_sample_rows(conn, catalog: SchemaCatalog, table: str, limit: int = 3) -> str:
    """First rows of ``table`` in key order, rendered for the multisql prompt."""
    from castle.values import canonical_value

    t = catalog.table(table)
    cols = ", ".join(f'"{c}"' for c in t.column_names)
    keys = ", ".join(f'"{k}"' for k in t.primary_key)
    raw = conn.query(f'SELECT {cols} FROM "{table}" ORDER BY {keys} LIMIT {int(limit)}', stage="C")
    rows = [[canonical_value(v, c) for v, c in zip(r, t.columns)] for r in raw]
    return render_sample_rows(list(t.column_names), rows, limit)
