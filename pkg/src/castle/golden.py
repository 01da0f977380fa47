"""Hand-authored reference responses for the scripted provider.

Every statement here is written from the instruction facts and the schema
alone, never from table contents, so a golden run exercises the same
schema-only path a model would.
"""

from __future__ import annotations

import hashlib
from pathlib import Path

from castle.datasets.retail import derive_quarter
from castle.datasets.soccer import CLUB_COLUMNS
from castle.llm import write_fixture
from castle.pipeline import PipelineOptions, build_method_prompt, touched_derived
from castle.prompts import build_trigger_prompt, render_instruction
from castle.schema import SchemaCatalog
from castle.sql.render import quote_string


def _q(name: str) -> str:
    return '"' + name.replace('"', '""') + '"'


def golden_update_sql(case, catalog: SchemaCatalog) -> str:
    """Correct castle-style UPDATE for a benchmark case."""
    f = case.facts
    if case.dataset == "soccer":
        table = catalog.table(case.table)
        dest = quote_string(f["dest_club_code"])
        sets = [f'{_q("club_code")} = {dest}']
        for col in CLUB_COLUMNS:
            if col == "club_code":
                continue
            if table.column(col).role == "derived-aggregate":
                sets.append(f"{_q(col)} = ?")
            else:
                sets.append(f"{_q(col)} = (SELECT {_q(col)} FROM {_q(case.table)} "
                            f"WHERE {_q('club_code')} = {dest} LIMIT 1)")
        where = f'{_q("player_code")} = {quote_string(f["player_code"])}'
    else:
        qty = int(f["Quantity"])
        op, amount = ("-", -qty) if qty < 0 else ("+", qty)
        quarter = f"{derive_quarter(f['InvoiceDate'])}_quantity"
        sets = [f"{_q(c)} = {_q(c)} {op} {amount}" for c in ("quantity", quarter)]
        where = (f'{_q("stockcode")} = {quote_string(f["StockCode"])} AND '
                 f'{_q("country")} = {quote_string(f["Country"])}')
    body = ",\n    ".join(sets)
    return f"UPDATE {_q(case.table)}\nSET\n    {body}\nWHERE {where};"


def naive_update_sql(case) -> str:
    """Direct-columns-only statement, the typical shape of an unguided answer."""
    f = case.facts
    if case.dataset == "soccer":
        return (f'UPDATE player_record SET club_code = {quote_string(f["dest_club_code"])} '
                f'WHERE player_code = {quote_string(f["player_code"])};')
    return (f"UPDATE {case.table} SET quantity = quantity + ({int(f['Quantity'])}) "
            f"WHERE stockcode = {quote_string(f['StockCode'])} AND country = {quote_string(f['Country'])};")


def golden_trigger_sql(catalog: SchemaCatalog, table: str, columns) -> str:
    """Function + trigger recomputing ``columns`` for the old and new groups of a changed source row."""
    rules = [catalog.rule_for(table, c) for c in columns]
    sources = {r.source_table for r in rules}
    keys = {r.group_by for r in rules}
    if len(sources) != 1 or len(keys) != 1:
        raise ValueError("golden triggers need one source table and one grouping")
    source, group = sources.pop(), keys.pop()
    digest = hashlib.sha256(",".join(columns).encode()).hexdigest()[:8]
    name = f"castle_refresh_{table[:24]}_{digest}"
    assign = ",\n        ".join(f"{c} = agg.{c}" for c in columns)
    exprs = ",\n               ".join(f"{r.expression} AS {r.column}" for r in rules)
    gcols = ", ".join(group)
    match = " AND ".join(f"t.{g} = agg.{g}" for g in group)
    watched = sorted(set(group) | {c for r in rules for c in r.referenced_columns()})
    if source == table:
        scope = f"{group[0]} IN (OLD.{group[0]}, NEW.{group[0]})" if len(group) == 1 else \
            f"({gcols}) IN (({', '.join('OLD.' + g for g in group)}), ({', '.join('NEW.' + g for g in group)}))"
        event = f"AFTER UPDATE OF {', '.join(watched)}"
    else:
        # OLD is NULL on INSERT and NEW on DELETE; NULL keys match no group.
        scope = (f"({gcols}) IN (SELECT {', '.join('OLD.' + g for g in group)} "
                 f"UNION ALL SELECT {', '.join('NEW.' + g for g in group)})")
        event = f"AFTER INSERT OR UPDATE OF {', '.join(watched)} OR DELETE"
    function = f"""CREATE OR REPLACE FUNCTION {name}()
RETURNS TRIGGER AS $$
BEGIN
    UPDATE {table} t
    SET {assign}
    FROM (SELECT {gcols},
               {exprs}
          FROM {source}
          WHERE {scope}
          GROUP BY {gcols}) agg
    WHERE {match};
    RETURN NULL;
END;
$$ LANGUAGE plpgsql;"""
    trigger = (f"CREATE TRIGGER {name}_trg\n{event} ON {source}\nFOR EACH ROW\n"
               f"WHEN (pg_trigger_depth() < 1)\nEXECUTE FUNCTION {name}();")
    return f"```sql\n{function}\n\n{trigger}\n```\n"


def write_golden_fixtures(fixture_dir, cases, catalog: SchemaCatalog, options: PipelineOptions, *,
                          covered=(), sample_rows: str | None = None, template_dir=None) -> int:
    """Fixtures for every case's update prompt and for each trigger the bench will request.

    Trigger requests depend on what earlier cases already deployed, so the
    sequential trigger phase is replayed here in case order starting from
    ``covered``.
    """
    from castle.forge import parse_update

    fixture_dir = Path(fixture_dir)
    written = 0
    have = set(covered)
    for case in cases:
        instruction = render_instruction(case.dataset, case.facts, case.case_id, template_dir)
        prompt = build_method_prompt(options, catalog, case.table, instruction, sample_rows)
        if options.method == "castle":
            sql = golden_update_sql(case, catalog)
        else:
            sql = naive_update_sql(case)
        write_fixture(fixture_dir, options.method, case.case_id, prompt, f"```sql\n{sql}\n```\n")
        written += 1
        if options.method != "castle":
            continue
        wanted = touched_derived(catalog, parse_update(sql, options.dialect))
        missing = [c for c in catalog.derived_columns(case.table) if c in wanted and c not in have]
        if missing:
            write_trigger_fixture(fixture_dir, catalog, case.table, missing, options)
            have.update(missing)
            written += 1
    return written


def write_trigger_fixture(fixture_dir, catalog: SchemaCatalog, table: str, columns,
                          options: PipelineOptions) -> Path:
    from castle.pipeline import trigger_schema_text

    columns = list(columns)
    rules = [catalog.rule_for(table, c) for c in columns]
    prompt = build_trigger_prompt(trigger_schema_text(catalog, table), table, columns, rules,
                                  dialect=options.dialect.value)
    return write_fixture(fixture_dir, "trigger_gen", f"{table}:{','.join(columns)}", prompt,
                         golden_trigger_sql(catalog, table, columns))
