"""``castle`` command line: update, bench, triggers, build-dataset.

Exit codes: 0 success, 2 configuration/input, 3 validation rejection,
4 runtime/database.
"""

from __future__ import annotations

import argparse
import json
import logging
import random
import sys
import tempfile
from pathlib import Path

from castle.config import RunConfig, resolve_config
from castle.errors import CastleError, ConfigError, PolicyError
from castle.llm import AuditLog, make_provider
from castle.pipeline import METHODS, PipelineOptions

TABLE_DATASETS = {"player_record": "soccer", "online_retail_quarterly_summary": "retail"}

# Flag name -> RunConfig field, shared by every subcommand.
GLOBAL_FLAGS = ("config", "dsn", "provider", "model", "method", "dry_run", "parallel", "seed", "out",
                "fixture_dir", "endpoint", "audit_log", "template_dir")


def _global_parser() -> argparse.ArgumentParser:
    # SUPPRESS defaults let the flags appear before or after the subcommand.
    g = argparse.ArgumentParser(add_help=False, argument_default=argparse.SUPPRESS)
    g.add_argument("--config", help="INI file with a [castle] section")
    g.add_argument("--dsn", help="PostgreSQL connection string")
    g.add_argument("--provider", choices=["scripted", "openai", "live", "openai-compatible"])
    g.add_argument("--model", help="model name sent to the provider")
    g.add_argument("--method", choices=METHODS)
    g.add_argument("--dry-run", action="store_true", dest="dry_run")
    g.add_argument("--parallel", type=int)
    g.add_argument("--seed", type=int, help="seed for case sampling")
    g.add_argument("--out", help="output directory")
    g.add_argument("--fixture-dir", dest="fixture_dir", help="scripted provider fixtures")
    g.add_argument("--endpoint", help="chat-completion endpoint URL")
    g.add_argument("--audit-log", dest="audit_log", help="append model calls to this JSON-lines file")
    g.add_argument("--template-dir", dest="template_dir", help="override prompt templates")
    return g


def build_parser() -> argparse.ArgumentParser:
    common = _global_parser()
    parser = argparse.ArgumentParser(prog="castle", parents=[common],
                                     description="Schema-only cascade UPDATE generation and evaluation.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    up = sub.add_parser("update", parents=[common], help="run the pipeline for one instruction")
    up.add_argument("instruction", help="natural-language update instruction")
    up.add_argument("--table", default="player_record")
    up.add_argument("--schema", help="DDL file (default: bundled schema for the table)")
    up.add_argument("--annotations", help="aggregation-rule CSV for --schema")
    up.add_argument("--content", dest="content_path", default=argparse.SUPPRESS,
                    help="CSV of sample rows for content-augmented methods")

    be = sub.add_parser("bench", parents=[common], help="evaluate a method on a built dataset")
    be.add_argument("dataset_dir", help="directory written by build-dataset")
    be.add_argument("--sample", type=int, default=argparse.SUPPRESS, help="evaluate N sampled cases")
    be.add_argument("--golden", action="store_true",
                    help="author reference fixtures into the fixture directory first")

    tr = sub.add_parser("triggers", parents=[common], help="verify or generate derived-column triggers")
    tr.add_argument("--table", required=True)
    tr.add_argument("--generate", action="store_true")
    tr.add_argument("--dataset-dir", dest="dataset_dir", default=argparse.SUPPRESS,
                    help="take the schema from a built dataset")

    bd = sub.add_parser("build-dataset", parents=[common], help="build seed state, cases and truth")
    bd.add_argument("dataset", choices=["soccer", "retail"])
    bd.add_argument("--year-a", dest="year_a")
    bd.add_argument("--year-b", dest="year_b")
    bd.add_argument("--transactions")
    bd.add_argument("--region-map", dest="region_map")
    bd.add_argument("--synthetic", action="store_true", help="generate a synthetic corpus (uses --seed)")
    return parser


def _config(args) -> RunConfig:
    given = vars(args)
    keys = GLOBAL_FLAGS + ("content_path", "sample", "dataset_dir", "schema", "annotations")
    overrides = {k: given[k] for k in keys if k in given}
    overrides.pop("config", None)
    return resolve_config(given.get("config"), overrides)


def _options(cfg: RunConfig) -> PipelineOptions:
    from castle.dialects import Dialect

    return PipelineOptions(method=cfg.method, model_name=cfg.model, dialect=Dialect.parse(cfg.dialect),
                           temperature=cfg.temperature, template_dir=cfg.template_dir)


def _provider(cfg: RunConfig, audit: AuditLog | None = None):
    return make_provider(cfg.provider, fixture_dir=cfg.fixture_dir, endpoint=cfg.endpoint,
                         retries=cfg.retries, audit=audit or AuditLog(cfg.audit_log))


def _catalog(cfg: RunConfig, table: str):
    from castle.datasets.catalogs import bundled_catalog
    from castle.schema import annotate_roles, load_annotations_file, load_schema_file

    if cfg.schema:
        for path in (cfg.schema, cfg.annotations):
            if path and not Path(path).exists():
                raise ConfigError(f"input file not found: {path}")
        catalog = load_schema_file(cfg.schema, cfg.dialect)
        if cfg.annotations:
            catalog = annotate_roles(catalog, load_annotations_file(cfg.annotations))
    elif cfg.dataset_dir:
        from castle.datasets import load_artifacts

        catalog = load_artifacts(cfg.dataset_dir).catalog
    elif table in TABLE_DATASETS:
        catalog = bundled_catalog(TABLE_DATASETS[table])
    else:
        raise ConfigError(f"unknown table {table!r}; pass --schema for tables outside the bundled datasets")
    if not catalog.has_table(table):
        raise ConfigError(f"unknown table {table!r}")
    return catalog


def _content_rows(cfg: RunConfig, catalog, table: str) -> str | None:
    from castle.datasets.tabular import read_csv
    from castle.prompts import render_sample_rows

    if not cfg.content_path:
        return None
    header, rows = read_csv(Path(cfg.content_path))
    return render_sample_rows(list(header), [[r[c] for c in header] for r in rows[:3]])


# -- commands -------------------------------------------------------------------------

def cmd_update(args, cfg: RunConfig, out) -> int:
    from castle.db import connect
    from castle.pipeline import run_pipeline
    from castle.prompts import Instruction

    table = args.table
    catalog = _catalog(cfg, table)
    options = _options(cfg)
    provider = _provider(cfg)
    instruction = Instruction(args.instruction, "adhoc", TABLE_DATASETS.get(table, "custom"))
    sample = _content_rows(cfg, catalog, table)
    conn = None if cfg.dry_run else connect(cfg.connection)
    try:
        result = run_pipeline(provider, options, catalog, table, instruction, conn=conn,
                              dry_run=cfg.dry_run, sample_rows=sample)
    finally:
        if conn is not None:
            conn.close()
    print(result.composed.sql_text, file=out)
    if result.plan is not None:
        t = result.plan.targets
        print(f"-- targets: direct={','.join(t.direct) or '-'} cascade={','.join(t.cascade) or '-'} "
              f"derived={','.join(t.derived) or '-'}", file=out)
        for r in result.plan.reports:
            detail = r.evidence if r.accepted else r.reason
            print(f"-- subquery {r.column}: {r.verdict} ({detail})", file=out)
        if result.plan.dropped:
            print(f"-- left to triggers: {', '.join(result.plan.dropped)}", file=out)
        trig = result.plan.triggers
        if trig:
            state = "deployed " + trig["deployed"] if trig.get("deployed") else \
                ("not checked (dry run)" if not trig.get("checked") else "covered")
            print(f"-- triggers: {state}", file=out)
    if result.rowcount is not None:
        print(f"-- rows updated: {result.rowcount}", file=out)
    return 0


def _sample_cases(cases, n: int | None, seed: int) -> list:
    if n is None or n >= len(cases):
        return list(cases)
    picked = set(random.Random(seed).sample(range(len(cases)), n))
    return [c for i, c in enumerate(cases) if i in picked]


def confidentiality_leaks(audit_records, artifacts, instructions) -> list:
    """Prompts in the audit log sharing a 12-character window with any seed row."""
    from castle.prompts import find_leaks, row_text

    rows = [row_text(r) for table_rows in artifacts.rows_by_table.values() for r in table_rows]
    found = []
    for rec in audit_records:
        leaks = find_leaks(rec["prompt"], rows, exclude=instructions)
        if leaks:
            found.append((rec.get("instruction_id"), leaks))
    return found


def cmd_bench(args, cfg: RunConfig, out) -> int:
    from castle.bench import run_bench
    from castle.datasets import load_artifacts
    from castle.metrics import emit_report
    from castle.prompts import render_instruction

    if not Path(args.dataset_dir).exists():
        raise ConfigError(f"dataset directory not found: {args.dataset_dir}")
    artifacts = load_artifacts(args.dataset_dir)
    cases = _sample_cases(artifacts.cases, cfg.sample, cfg.seed)
    options = _options(cfg)
    out_dir = Path(cfg.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    if args.golden:
        cfg = _with_golden_fixtures(cfg, artifacts, cases, options)
    audit = AuditLog(cfg.audit_log)
    provider = _provider(cfg, audit)
    result = run_bench(artifacts, provider, cfg.connection.dsn, options, parallel=cfg.parallel,
                       cases=cases, template_dir=cfg.template_dir)

    emit_report(result.reports, "table-text", out_dir / "report.txt")
    emit_report(result.reports, "csv", out_dir / "report.csv")
    emit_report(result.reports, "json-lines", out_dir / "report.jsonl")
    with open(out_dir / "cases.jsonl", "w", encoding="utf-8") as fh:
        for o in result.outcomes:
            fh.write(json.dumps({"case_id": o.case_id, "error": o.error, "stage": o.stage, "sql": o.sql,
                                 "attempts": o.attempts}, sort_keys=True) + "\n")
    print((out_dir / "report.txt").read_text(encoding="utf-8"), file=out, end="")
    print(f"{len(cases)} cases, {len(result.failed)} failed, {result.seconds:.1f}s", file=out)

    instructions = [render_instruction(c.dataset, c.facts, c.case_id, cfg.template_dir).text for c in cases]
    leaks = confidentiality_leaks(audit.records, artifacts, instructions)
    if cfg.method == "castle":
        print(f"confidentiality: {'PASS' if not leaks else 'FAIL'} "
              f"({len(audit.records)} prompts scanned, {len(leaks)} with row values)", file=out)
        if leaks:
            raise PolicyError(f"prompts contain table-row values: {leaks[:3]}", stage="C")
    else:
        print(f"confidentiality: not gated for {cfg.method} ({len(leaks)} prompts with row values)", file=out)
    return 0


def _with_golden_fixtures(cfg: RunConfig, artifacts, cases, options) -> RunConfig:
    from dataclasses import replace

    from castle.bench import load_seed
    from castle.db import connect
    from castle.golden import write_golden_fixtures
    from castle.pipeline import fetch_sample_rows

    if cfg.provider != "scripted":
        raise ConfigError("--golden needs the scripted provider")
    fixture_dir = cfg.fixture_dir or tempfile.mkdtemp(prefix="castle-fixtures-")
    sample = None
    if options.method == "multisql":
        conn = connect(cfg.connection)
        try:
            load_seed(conn, artifacts)
            sample = fetch_sample_rows(conn, artifacts.catalog, cases[0].table)
        finally:
            conn.close()
    write_golden_fixtures(fixture_dir, cases, artifacts.catalog, options, sample_rows=sample,
                          template_dir=cfg.template_dir)
    return replace(cfg, fixture_dir=fixture_dir)


def cmd_triggers(args, cfg: RunConfig, out) -> int:
    from castle.db import connect
    from castle.pipeline import trigger_schema_text
    from castle.triggers import covering_triggers, ensure_coverage, list_triggers, verify_coverage

    table = args.table
    catalog = _catalog(cfg, table)
    conn = connect(cfg.connection)
    try:
        for t in list_triggers(conn, table):
            print(f"trigger {t.name} on {t.table}: {t.timing_event}", file=out)
        covering = covering_triggers(conn, table)
        for t in covering:
            if t.table != table:
                print(f"trigger {t.name} on {t.table}: maintains {table}.{','.join(t.covered_columns)}", file=out)
        missing = verify_coverage(covering, catalog, table)
        print(f"missing: {', '.join(missing) if missing else 'none'}", file=out)
        if args.generate and missing:
            result = ensure_coverage(conn, _provider(cfg), catalog, table, missing,
                                     schema_text=trigger_schema_text(catalog, table), model_name=cfg.model)
            print(f"deployed {result['deployed']} covering {', '.join(result['missing'])}", file=out)
            still = verify_coverage(covering_triggers(conn, table), catalog, table)
            print(f"missing after generation: {', '.join(still) if still else 'none'}", file=out)
    finally:
        conn.close()
    return 0


def cmd_build_dataset(args, cfg: RunConfig, out) -> int:
    from castle.datasets import load_region_map, retail_artifacts, soccer_artifacts, write_artifacts
    from castle.datasets.synthetic import synthetic_retail, synthetic_soccer

    def need(path, flag):
        if args.synthetic:
            return None
        if not path:
            raise ConfigError(f"{flag} is required (or pass --synthetic)")
        if not Path(path).exists():
            raise ConfigError(f"input file not found: {path}")
        return Path(path)

    if args.dataset == "soccer":
        a, b = need(args.year_a, "--year-a"), need(args.year_b, "--year-b")
        if args.synthetic:
            a, b = synthetic_soccer(cfg.seed)
        artifacts, build = soccer_artifacts(a, b)
        extra = f"{build.retired} retired, {build.unchanged} unchanged, {build.skipped} skipped"
    else:
        tx = need(args.transactions, "--transactions")
        if args.synthetic:
            tx = synthetic_retail(cfg.seed)
        if args.region_map and not Path(args.region_map).exists():
            raise ConfigError(f"input file not found: {args.region_map}")
        regions = load_region_map(Path(args.region_map)) if args.region_map else None
        artifacts, build = retail_artifacts(tx, regions)
        extra = f"{build.invalid} invalid returns, {build.ignored} zero-quantity lines"
    written = write_artifacts(cfg.out, artifacts)
    n = len(artifacts.cases)
    print(f"{n} {'case' if n == 1 else 'cases'} ({extra})", file=out)
    print(f"wrote {len(written)} files to {cfg.out}", file=out)
    return 0


COMMANDS = {"update": cmd_update, "bench": cmd_bench, "triggers": cmd_triggers,
            "build-dataset": cmd_build_dataset}


def main(argv=None, out=None, err=None) -> int:
    out = out or sys.stdout
    err = err or sys.stderr
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = _config(args)
        return COMMANDS[args.command](args, cfg, out)
    except CastleError as exc:
        label = f"stage {exc.stage}" if exc.stage else type(exc).__name__
        print(f"error ({label}): {exc.message}", file=err)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
