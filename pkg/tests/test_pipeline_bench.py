import pytest

from castle.bench import load_seed, run_bench
from castle.datasets import retail_artifacts, soccer_artifacts
from castle.datasets.synthetic import synthetic_retail, synthetic_soccer
from castle.errors import PolicyError, ValidationError
from castle.forge import compose_update, parse_update
from castle.golden import golden_update_sql, write_golden_fixtures, write_trigger_fixture
from castle.llm import ScriptedProvider, write_fixture
from castle.metrics import identified_cells, render_table
from castle.pipeline import (PipelineOptions, build_method_prompt, fetch_sample_rows, run_pipeline,
                             trigger_schema_text)
from castle.prompts import Instruction, render_instruction
from castle.triggers import covering_triggers, deploy_trigger, generate_trigger

pytestmark = pytest.mark.db

DERIVED = ("squad_size", "average_age", "foreigners_number", "foreigners_percentage", "national_team_players")


@pytest.fixture(scope="module")
def soccer():
    artifacts, _ = soccer_artifacts(*synthetic_soccer(seed=11, players=40, movers=8, retirements=1))
    return artifacts


@pytest.fixture(scope="module")
def retail():
    artifacts, _ = retail_artifacts(synthetic_retail(seed=11, sales=60, returns=6))
    return artifacts


def _bench(artifacts, dsn, fixtures, method="castle", parallel=1, sample=None):
    options = PipelineOptions(method=method)
    write_golden_fixtures(fixtures, artifacts.cases, artifacts.catalog, options, sample_rows=sample)
    return run_bench(artifacts, ScriptedProvider(fixtures), dsn, options, parallel=parallel)


def _by_group(result):
    return {r.group: r for r in result.reports}


def test_golden_castle_bench_is_perfect(soccer, dsn, tmp_path):
    result = _bench(soccer, dsn, tmp_path)
    assert result.failed == []
    groups = _by_group(result)
    assert set(groups) == {"overall", "direct", "cascade", "derived"}
    for r in groups.values():
        assert (r.recall, r.f1, r.cellwise_correctness) == (1, 1, 1)
    assert groups["overall"].tally.cases == len(soccer.cases)


def test_golden_retail_bench_is_perfect(retail, dsn, tmp_path):
    result = _bench(retail, dsn, tmp_path)
    assert result.failed == []
    overall = _by_group(result)["overall"]
    assert (overall.recall, overall.f1, overall.cellwise_correctness) == (1, 1, 1)


def test_baseline_misses_cascade_and_derived(soccer, dsn, tmp_path):
    result = _bench(soccer, dsn, tmp_path, method="baseline")
    groups = _by_group(result)
    assert groups["direct"].recall == pytest.approx(0.5)
    assert groups["cascade"].recall == 0 and groups["derived"].recall == 0
    assert all(r.method == "baseline" for r in result.reports)


def test_multisql_bench_uses_sample_rows(soccer, dsn, tmp_path):
    from castle.db import connect

    with connect(dsn) as c:
        load_seed(c, soccer)
        sample = fetch_sample_rows(c, soccer.catalog, "player_record")
    result = _bench(soccer, dsn, tmp_path, method="multisql", sample=sample)
    assert result.failed == []
    assert all(sample.strip() in o.prompt for o in result.outcomes)


def test_failed_case_scores_zero(soccer, dsn, tmp_path):
    options = PipelineOptions()
    write_golden_fixtures(tmp_path, soccer.cases[1:], soccer.catalog, options)
    result = run_bench(soccer, ScriptedProvider(tmp_path), dsn, options)
    [failed] = result.failed
    assert failed.case_id == soccer.cases[0].case_id and failed.stage == "gateway"
    overall = _by_group(result)["overall"]
    assert overall.tally.failed == 1
    missed = len(soccer.cases[0].truth_delta)
    assert overall.tally.required - overall.tally.hit == missed
    assert overall.recall < 1


def test_parallel_reports_are_identical(soccer, cluster, tmp_path):
    from castle.db import connect

    texts = []
    for n, parallel in enumerate((1, 4)):
        name = f"par_{n}"
        with connect(cluster.dsn) as admin:
            admin.execute(f"DROP DATABASE IF EXISTS {name}")
            admin.execute(f"CREATE DATABASE {name}")
        dsn = cluster.dsn.replace("dbname=postgres", f"dbname={name}")
        texts.append(render_table(_bench(soccer, dsn, tmp_path / str(n), parallel=parallel).reports))
    assert texts[0] == texts[1]


def test_identified_cells_follow_trigger_groups(soccer, conn, tmp_path):
    load_seed(conn, soccer)
    case = soccer.cases[0]
    sql = golden_update_sql(case, soccer.catalog)
    sk = parse_update(sql).without(DERIVED)
    composed = compose_update(sk, {}, "postgresql", soccer.catalog)
    plain = identified_cells(composed, conn, key_columns=case.key_columns)
    assert {r for r, _ in plain} == {(case.facts["player_code"],)}

    write_trigger_fixture(tmp_path, soccer.catalog, "player_record", DERIVED, PipelineOptions())
    script = generate_trigger(ScriptedProvider(tmp_path), trigger_schema_text(soccer.catalog, "player_record"),
                              "player_record", DERIVED, soccer.catalog)
    deploy_trigger(conn, script)
    found = identified_cells(composed, conn, key_columns=case.key_columns,
                             triggers=covering_triggers(conn, "player_record"))
    assert case.truth_delta.addresses() <= found
    clubs = {case.facts["from_club_code"], case.facts["dest_club_code"]}
    members = {(r[0],) for r in conn.query(
        "SELECT player_code FROM player_record WHERE club_code = ANY(%s)", (list(clubs),))}
    assert {r for r, c in found if c == "squad_size"} == members


def _adhoc(tmp_path, sql):
    catalog = soccer_artifacts(*synthetic_soccer(seed=0, players=30, movers=3, retirements=1))[0].catalog
    instruction = Instruction("Lionel Messi moved to psg.", "adhoc", "soccer")
    options = PipelineOptions()
    prompt = build_method_prompt(options, catalog, "player_record", instruction)
    write_fixture(tmp_path, "castle", "adhoc", prompt, f"```sql\n{sql}\n```")
    return ScriptedProvider(tmp_path), options, catalog, instruction


def test_dry_run_drops_derived_placeholders(tmp_path, soccer):
    sql = golden_update_sql(soccer.cases[0], soccer.catalog)
    provider, options, catalog, instruction = _adhoc(tmp_path, sql)
    result = run_pipeline(provider, options, catalog, "player_record", instruction, dry_run=True)
    assert set(result.plan.dropped) == set(DERIVED)
    assert "?" not in result.composed.sql_text and result.rowcount is None
    assert all(r.accepted for r in result.plan.reports)


def test_unsound_subquery_stops_at_stage_s(tmp_path):
    sql = ("UPDATE player_record SET club_code = 'psg', coach_name = "
           "(SELECT coach_name FROM player_record WHERE club_code = 'psg') WHERE player_code = 'lionel-messi';")
    provider, options, catalog, instruction = _adhoc(tmp_path, sql)
    with pytest.raises(ValidationError) as info:
        run_pipeline(provider, options, catalog, "player_record", instruction, dry_run=True)
    assert info.value.stage == "S"


def test_wrong_table_is_a_policy_error(tmp_path):
    provider, options, catalog, instruction = _adhoc(
        tmp_path, "UPDATE other_table SET x = 1 WHERE y = 2;")
    with pytest.raises(PolicyError) as info:
        run_pipeline(provider, options, catalog, "player_record", instruction, dry_run=True)
    assert info.value.stage == "C"


def test_instruction_rendering_is_stable(soccer):
    case = soccer.cases[0]
    assert render_instruction("soccer", case.facts, case.case_id).text == \
        render_instruction("soccer", case.facts, case.case_id).text
