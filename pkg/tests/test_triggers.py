import dataclasses
import random

import pytest

from castle.errors import DatabaseError, TriggerGenerationError, ValidationError
from castle.golden import write_trigger_fixture
from castle.llm import ScriptedProvider
from castle.pipeline import PipelineOptions, trigger_schema_text
from castle.triggers import (LEDGER_TABLE, TriggerInfo, covering_triggers, deploy_trigger, ensure_coverage,
                             generate_trigger, list_all_triggers, list_triggers, script_from_sql,
                             trigger_name_for, verify_coverage)

from corpus import derived_mismatches, random_state

DERIVED = ["squad_size", "average_age", "foreigners_number", "foreigners_percentage", "national_team_players"]
T = "player_record"


def _golden_script(tmp_path, catalog, columns=DERIVED):
    write_trigger_fixture(tmp_path, catalog, T, columns, PipelineOptions())
    provider = ScriptedProvider(tmp_path)
    return provider, generate_trigger(provider, trigger_schema_text(catalog, T), T, columns, catalog)


def _info(covered, target=T):
    return TriggerInfo("x", T, "AFTER UPDATE", target_table=target, covered_columns=tuple(covered))


# -- pure --------------------------------------------------------------------------

def test_verify_coverage_all_partial_none(soccer_catalog):
    assert verify_coverage([], soccer_catalog, T) == DERIVED
    assert verify_coverage([_info(["squad_size"])], soccer_catalog, T) == DERIVED[1:]
    assert verify_coverage([_info(DERIVED[:2]), _info(DERIVED[2:])], soccer_catalog, T) == []
    assert verify_coverage([_info(DERIVED, target="other")], soccer_catalog, T) == DERIVED


def test_script_is_renamed_and_made_replaceable(soccer_catalog, squad_trigger_sql):
    text = squad_trigger_sql.replace("CREATE OR REPLACE FUNCTION", "CREATE FUNCTION")
    script = script_from_sql(text, soccer_catalog, T, ["squad_size"])
    assert script.trigger_name == trigger_name_for(T, ["squad_size"])
    assert script.trigger_sql.startswith(f"CREATE TRIGGER {script.trigger_name}")
    assert script.function_sql.startswith("CREATE OR REPLACE FUNCTION update_squad_size_transfer")
    assert script.function_name == "update_squad_size_transfer"
    assert script.watched_columns == ("club_code",) and script.group_columns == ("club_code",)


@pytest.mark.parametrize("mutate, message", [
    (lambda s: s.split("CREATE TRIGGER")[0], "one CREATE FUNCTION and one CREATE TRIGGER"),
    (lambda s: s.replace("EXECUTE FUNCTION update_squad_size_transfer", "EXECUTE FUNCTION other_fn"),
     "the function is"),
    (lambda s: s.replace("AFTER UPDATE", "BEFORE UPDATE"), "AFTER"),
    (lambda s: s.replace("OF club_code ON", "OF club_kode ON"), "unknown column"),
    (lambda s: s + "\nDROP TABLE player_record;", "unexpected statement"),
])
def test_script_validation(soccer_catalog, squad_trigger_sql, mutate, message):
    with pytest.raises(ValidationError, match=message):
        script_from_sql(mutate(squad_trigger_sql), soccer_catalog, T, ["squad_size"])


def test_script_must_cover_derived_columns(soccer_catalog, squad_trigger_sql):
    with pytest.raises(ValidationError, match="not a derived column"):
        script_from_sql(squad_trigger_sql, soccer_catalog, T, ["coach_name"])


def test_generate_trigger_retries_then_fails(tmp_path, soccer_catalog):
    path = write_trigger_fixture(tmp_path, soccer_catalog, T, ["squad_size"], PipelineOptions())
    path.write_text("I cannot write that trigger.", encoding="utf-8")
    provider = ScriptedProvider(tmp_path)
    with pytest.raises(TriggerGenerationError, match="after 3 attempts") as info:
        generate_trigger(provider, trigger_schema_text(soccer_catalog, T), T, ["squad_size"], soccer_catalog)
    assert info.value.last_response == "I cannot write that trigger."
    assert info.value.stage == "T"
    assert len(provider.audit.records) == 3


def test_generate_trigger_from_golden_fixture(tmp_path, soccer_catalog):
    _, script = _golden_script(tmp_path, soccer_catalog)
    assert script.covered_columns == tuple(DERIVED)
    assert "club_code" in script.watched_columns and script.event_table == T


# -- against a server ------------------------------------------------------------------

@pytest.mark.db
def test_list_triggers_fresh_then_hand_written(conn, soccer_catalog, squad_trigger_sql):
    random_state(conn, 0, "soccer")
    assert list_triggers(conn, T) == []
    assert list_all_triggers(conn) == []
    conn.execute(squad_trigger_sql)
    [info] = list_triggers(conn, T)
    assert info.name == "squad_size_transfer" and info.function_name == "update_squad_size_transfer"
    assert info.timing_event.startswith("AFTER UPDATE OF club_code")
    assert info.target_table is None and info.covered_columns == ()
    assert list_all_triggers(conn) == [(T, "squad_size_transfer")]
    # not deployed through us, so it covers nothing on record
    assert verify_coverage(covering_triggers(conn, T), soccer_catalog, T) == DERIVED


@pytest.mark.db
def test_deploy_twice_is_idempotent(conn, tmp_path, soccer_catalog):
    random_state(conn, 0, "soccer")
    _, script = _golden_script(tmp_path, soccer_catalog)
    assert deploy_trigger(conn, script) and deploy_trigger(conn, script)
    [info] = covering_triggers(conn, T)
    assert info.name == script.trigger_name and info.covered_columns == tuple(DERIVED)
    assert conn.query(f"SELECT count(*) FROM {LEDGER_TABLE}")[0][0] == 1
    assert verify_coverage(covering_triggers(conn, T), soccer_catalog, T) == []


@pytest.mark.db
def test_malformed_deploy_rolls_back(conn, tmp_path, soccer_catalog):
    random_state(conn, 0, "soccer")
    _, script = _golden_script(tmp_path, soccer_catalog)
    broken = dataclasses.replace(script, trigger_sql=script.trigger_sql.replace(
        f"EXECUTE FUNCTION {script.function_name}()", "EXECUTE FUNCTION no_such_function()"))
    with pytest.raises(DatabaseError) as info:
        deploy_trigger(conn, broken)
    assert info.value.stage == "T"
    assert list_triggers(conn, T) == []
    assert conn.query("SELECT count(*) FROM pg_proc WHERE proname = %s", (script.function_name,))[0][0] == 0
    assert conn.query("SELECT to_regclass(%s)", (LEDGER_TABLE,))[0][0] is None


@pytest.mark.db
def test_ensure_coverage_generates_once(conn, tmp_path, soccer_catalog):
    random_state(conn, 0, "soccer")
    write_trigger_fixture(tmp_path, soccer_catalog, T, DERIVED, PipelineOptions())
    provider = ScriptedProvider(tmp_path)
    schema = trigger_schema_text(soccer_catalog, T)
    first = ensure_coverage(conn, provider, soccer_catalog, T, DERIVED, schema_text=schema)
    assert first["missing"] == DERIVED and first["deployed"] == trigger_name_for(T, DERIVED)
    again = ensure_coverage(conn, provider, soccer_catalog, T, DERIVED, schema_text=schema)
    assert again == {"missing": [], "deployed": None}
    assert len(provider.audit.records) == 1


@pytest.mark.db
def test_generated_trigger_keeps_squads_consistent(conn, tmp_path, soccer_catalog):
    random_state(conn, 5, "soccer")
    _, script = _golden_script(tmp_path, soccer_catalog)
    deploy_trigger(conn, script)
    assert derived_mismatches(conn, soccer_catalog) == []
    rng = random.Random(5)
    codes = [r[0] for r in conn.query("SELECT player_code FROM player_record ORDER BY player_code")]
    clubs = sorted({r[0] for r in conn.query("SELECT club_code FROM player_record")})
    for _ in range(10):
        player, club = rng.choice(codes), rng.choice(clubs)
        conn.execute("UPDATE player_record SET club_code = %s WHERE player_code = %s", (club, player))
        conn.execute("UPDATE player_record SET age = age + 1 WHERE player_code = %s", (rng.choice(codes),))
        assert derived_mismatches(conn, soccer_catalog) == []
