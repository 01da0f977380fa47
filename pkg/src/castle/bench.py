"""Benchmark runner.

Phase A (parallel): prompt, generate, parse, classify and validate each case.
Phase B (sequential): trigger maintenance, since deployment changes shared state.
Phase C (parallel, one connection per worker): compose, then inside a
rolled-back transaction identify cells, execute and snapshot; score.

Per-case tallies merge by summation, so reports do not depend on the
worker count or completion order.
"""

from __future__ import annotations

import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

from castle.cells import UpdateCase
from castle.datasets.seed import DatasetArtifacts
from castle.db import connect, run_isolated, snapshot
from castle.errors import CastleError, DatabaseError
from castle.forge import ComposedUpdate, classify_assignments, mentioned_columns
from castle.metrics import MetricsReport, Tally, breakdown, identified_cells, truth_targets
from castle.pipeline import (TEMPLATE_DIRECTIVES, Generation, PipelineOptions, compose, execute,
                             fetch_sample_rows, generate, maintain, plan)
from castle.prompts import render_instruction
from castle.triggers import LEDGER_TABLE, covering_triggers

log = logging.getLogger(__name__)

RETRYABLE = {"40P01", "40001"}  # deadlock, serialization failure


@dataclass
class CaseOutcome:
    case_id: str
    tallies: dict = field(default_factory=dict)
    error: str | None = None
    stage: str | None = None
    sql: str | None = None
    prompt: str | None = None
    attempts: int = 0


@dataclass
class BenchResult:
    reports: list
    outcomes: list
    seconds: float

    @property
    def failed(self) -> list:
        return [o for o in self.outcomes if o.error]


def load_seed(conn, artifacts: DatasetArtifacts) -> None:
    """Replace the dataset tables (and any trigger bookkeeping) with the seed state."""
    for t in reversed(artifacts.catalog.tables):
        conn.execute(f'DROP TABLE IF EXISTS "{t.name}" CASCADE')
    conn.execute(f"DROP TABLE IF EXISTS {LEDGER_TABLE}")
    conn.execute(artifacts.seed_sql)


@dataclass
class _Work:
    case: UpdateCase
    instruction: object
    outcome: CaseOutcome
    generation: Generation | None = None
    plan: object = None
    targets: object = None


def _fail(work: _Work, exc: Exception) -> None:
    work.outcome.error = str(exc)
    work.outcome.stage = getattr(exc, "stage", None)


def _phase_a(work: _Work, provider, options: PipelineOptions, catalog, sample_rows) -> None:
    case = work.case
    try:
        work.generation = generate(provider, options, catalog, case.table, work.instruction,
                                   sample_rows=sample_rows)
        work.outcome.sql = work.generation.sql
        work.outcome.prompt = work.generation.prompt
        if options.method == "castle":
            work.plan = plan(work.generation, options, catalog, work.instruction)
    except CastleError as exc:
        _fail(work, exc)


def _targets(work: _Work, catalog):
    case = work.case
    table = catalog.table(case.table)
    mentions = mentioned_columns(work.instruction.text, table, TEMPLATE_DIRECTIVES.get(case.table, ()))
    statement = None
    if work.plan is not None:
        statement = work.plan.targets
    elif work.generation is not None:
        statement = classify_assignments(work.generation.skeleton, work.instruction, catalog, mentions)
    return truth_targets(case.truth_delta, catalog, case.table, list(case.facts.values()), mentions, statement)


def _score(conn, work: _Work, options: PipelineOptions, catalog, triggers) -> dict:
    case = work.case
    composed = compose(work.plan, options, catalog) if work.plan is not None else \
        compose_plain(work.generation, options)
    columns = {c.name: c for c in catalog.table(case.table).columns}

    def body(c):
        found = identified_cells(composed, c, key_columns=case.key_columns, triggers=triggers)
        execute(c, composed)
        post = snapshot(c, case.table, catalog=catalog, key=case.key_columns)
        return breakdown(found, case.truth_delta, post, work.targets, columns)

    work.outcome.sql = composed.sql_text
    for attempt in range(1, 6):
        work.outcome.attempts = attempt
        try:
            return run_isolated(conn, body)
        except DatabaseError as exc:
            if exc.sqlstate in RETRYABLE and attempt < 5:
                time.sleep(0.05 * attempt)
                continue
            raise
    raise AssertionError("unreachable")


def compose_plain(generation: Generation, options: PipelineOptions) -> ComposedUpdate:
    return ComposedUpdate(generation.skeleton, options.dialect, generation.sql)


def _phase_c(dsn: str, works: list, options: PipelineOptions, catalog) -> None:
    if not works:
        return
    conn = connect(dsn)
    try:
        triggers = {t: covering_triggers(conn, t) for t in {w.case.table for w in works}}
        for work in works:
            if work.outcome.error:
                continue
            try:
                work.outcome.tallies = _score(conn, work, options, catalog, triggers[work.case.table])
            except CastleError as exc:
                _fail(work, exc)
    finally:
        conn.close()


def run_bench(artifacts: DatasetArtifacts, provider, dsn: str, options: PipelineOptions, *,
              parallel: int = 1, cases=None, reseed: bool = True, template_dir=None) -> BenchResult:
    if parallel < 1:
        raise ValueError("parallel must be a positive integer")
    started = time.perf_counter()
    catalog = artifacts.catalog
    cases = list(artifacts.cases if cases is None else cases)
    works = [_Work(c, render_instruction(c.dataset, c.facts, c.case_id, template_dir), CaseOutcome(c.case_id))
             for c in cases]

    setup = connect(dsn)
    try:
        if reseed:
            load_seed(setup, artifacts)
        samples = {}
        if options.method == "multisql":
            for table in {c.table for c in cases}:
                samples[table] = fetch_sample_rows(setup, catalog, table)

        with ThreadPoolExecutor(max_workers=parallel) as pool:
            list(pool.map(lambda w: _phase_a(w, provider, options, catalog, samples.get(w.case.table)), works))

        for w in works:
            if w.plan is not None and not w.outcome.error:
                try:
                    maintain(setup, provider, options, catalog, w.plan)
                except CastleError as exc:
                    _fail(w, exc)
    finally:
        setup.close()

    for w in works:
        w.targets = _targets(w, catalog)
    lanes = [works[i::parallel] for i in range(parallel)]
    with ThreadPoolExecutor(max_workers=parallel) as pool:
        list(pool.map(lambda lane: _phase_c(dsn, lane, options, catalog), lanes))

    for w in works:
        if w.outcome.error:
            w.outcome.tallies = breakdown((), w.case.truth_delta, None, w.targets, failed=True)
            log.info("case %s failed at stage %s: %s", w.case.case_id, w.outcome.stage, w.outcome.error)
    reports = merge_reports([w.outcome for w in works], options.method, options.model_name, artifacts.dataset)
    return BenchResult(reports, [w.outcome for w in works], time.perf_counter() - started)


def merge_reports(outcomes, method: str, model: str, dataset: str) -> list:
    totals: dict = {}
    for o in outcomes:
        for group, tally in o.tallies.items():
            totals[group] = totals.get(group, Tally()) + tally
    return [MetricsReport(method, model, dataset, g, t) for g, t in totals.items()]
