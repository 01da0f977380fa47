from decimal import Decimal

import pytest
from hypothesis import given, settings, strategies as st

from castle.dialects import Dialect
from castle.errors import CompositionError, PolicyError, SqlSyntaxError, ValidationError
from castle.forge import (ArithmeticOnSelf, Assignment, Subquery, SubqueryPlan, UpdateSkeleton,
                          classify_assignments, compose_update, mentioned_columns, parse_update,
                          subquery_plans, validate_subquery)
from castle.pipeline import directive_columns
from castle.prompts import render_instruction
from castle.sql import ast
from castle.sql.lexer import IDENT, QIDENT, STRING, tokenize
from castle.sql.parser import RESERVED, parse_query
from castle.sql.render import render_query

from corpus import ADVERSARIAL, random_state

# Reference skeleton with its elision lines ("...") removed; they are not SQL.
SKELETON = """UPDATE player_record
SET
    "club_name" = 'Paris Saint-Germain', -- directly update
    "club_code" = 'psg', -- directly update
    "stadium_name" = ?, -- causally-dependent column
    "competition_country" = ?, -- causally-dependent column
    "foreigners_percentage" = ?, -- aggregate and derived column
    "squad_size" = ? -- aggregate and derived column
WHERE
    "player_code" = 'lionel-messi';"""

RETAIL_MULTISQL = """UPDATE online_retail_quarterly_summary
SET
    quantity = quantity - 1,
    y2011q4_quantity = y2011q4_quantity - 1
WHERE
    stockcode = '84978' AND
    country = 'United Kingdom';"""

MESSI = dict(first_name="Lionel", last_name="Messi", player_code="lionel-messi",
             from_club_code="fc-barcelona", dest_club_code="psg")
RETURN_84978 = {"StockCode": "84978", "Quantity": "-1", "InvoiceDate": "2011-11-15", "UnitPrice": "1.25",
                "Country": "United Kingdom"}


def _plan(sql, dialect="postgresql", table="player_record", column="x"):
    return SubqueryPlan(column, parse_query(sql, dialect), None, table)


# -- parse_update ----------------------------------------------------------------------

def test_reference_skeleton():
    sk = parse_update(SKELETON)
    assert sk.table == "player_record"
    assert sk.value("club_name") == ast.Literal("Paris Saint-Germain", "string")
    assert isinstance(sk.value("stadium_name"), ast.Placeholder)
    assert sk.placeholders() == ("stadium_name", "competition_country", "foreigners_percentage", "squad_size")
    assert sk.where == ast.Binary("=", ast.Column("player_code"), ast.Literal("lionel-messi", "string"))


def test_skeleton_with_elisions_is_not_sql():
    with pytest.raises(SqlSyntaxError, match="line 5, column 5"):
        parse_update(SKELETON.replace("'psg', -- directly update", "'psg', -- directly update\n    ..."))


def test_retail_arithmetic_on_self():
    sk = parse_update(RETAIL_MULTISQL)
    for col in ("quantity", "y2011q4_quantity"):
        v = sk.value(col)
        assert isinstance(v, ArithmeticOnSelf)
        assert (v.target.name, v.op, v.operand) == (col, "-", ast.Literal(1, "number"))


@pytest.mark.parametrize("sql", ["DELETE FROM t", "SELECT 1", "INSERT INTO t VALUES (1)"])
def test_non_update_rejected(sql):
    with pytest.raises(PolicyError, match="non-UPDATE statement"):
        parse_update(sql)


def test_whereless_update_is_policy_error():
    with pytest.raises(PolicyError, match="no WHERE"):
        parse_update("UPDATE player_record SET club_code = 'psg'")


def test_duplicate_assignment_is_policy_error():
    with pytest.raises(PolicyError, match="more than once"):
        parse_update("UPDATE t SET a = 1, a = 2 WHERE b = 1")


def test_multiple_statements_rejected():
    with pytest.raises(PolicyError, match="multiple statements"):
        parse_update("UPDATE t SET a = 1 WHERE b = 1; UPDATE t SET a = 2 WHERE b = 2;")


# -- validate_subquery -----------------------------------------------------------------

def test_limit_one_accepted(soccer_catalog):
    r = validate_subquery(_plan("SELECT coach_name FROM player_record WHERE club_code='psg' LIMIT 1"),
                          "postgresql", soccer_catalog)
    assert (r.verdict, r.evidence) == ("ACCEPT", "limit-one-clause")


def test_scalar_aggregate_accepted(soccer_catalog):
    r = validate_subquery(_plan("SELECT COUNT(*) FROM player_record WHERE club_code='psg'"),
                          "postgresql", soccer_catalog)
    assert (r.verdict, r.evidence) == ("ACCEPT", "scalar-aggregate")


def test_unbounded_non_key_rejected(soccer_catalog):
    r = validate_subquery(_plan("SELECT coach_name FROM player_record WHERE club_code='psg'"),
                          "postgresql", soccer_catalog)
    assert r.verdict == "REJECT"
    assert "cardinality unproven" in r.reason


@pytest.mark.db
def test_unbounded_rejection_is_necessary(conn, soccer_catalog):
    # two psg rows make the rejected subquery return two rows
    random_state(conn, 0, "soccer")
    rows = conn.query("SELECT coach_name FROM player_record WHERE club_code='psg'")
    assert len(rows) >= 2


def test_unknown_column_raises(soccer_catalog):
    with pytest.raises(ValidationError, match="nosuch"):
        validate_subquery(_plan("SELECT nosuch FROM player_record LIMIT 1"), "postgresql", soccer_catalog)


def test_limit_syntax_is_dialect_checked(soccer_catalog):
    top = _plan("SELECT TOP 1 coach_name FROM player_record", "sqlserver")
    assert validate_subquery(top, "sqlserver", soccer_catalog).accepted
    assert not validate_subquery(top, "postgresql", soccer_catalog).accepted


def _catalog_for(table, soccer_catalog, retail_catalog):
    return soccer_catalog if table == "player_record" else retail_catalog


@pytest.mark.db
def test_accepted_corpus_items_return_at_most_one_row(conn, soccer_catalog, retail_catalog):
    accepted = []
    for dialect, table, sql in ADVERSARIAL:
        cat = _catalog_for(table, soccer_catalog, retail_catalog)
        if validate_subquery(_plan(sql, dialect, table), dialect, cat).accepted:
            accepted.append((table, render_query(parse_query(sql, dialect), "postgresql")))
    assert accepted
    for seed in range(3):
        for dataset in ("soccer", "retail"):
            random_state(conn, seed, dataset)
            for table, sql in accepted:
                if (table == "player_record") != (dataset == "soccer"):
                    continue
                # a scalar subquery returning two rows is a server error
                conn.query(f'SELECT ({sql}) FROM "{table}"')


# -- classify_assignments ---------------------------------------------------------------

def test_skeleton_partition(soccer_catalog):
    ins = render_instruction("soccer", MESSI)
    table = soccer_catalog.table("player_record")
    mentions = mentioned_columns(ins.text, table, directive_columns("castle", "player_record"))
    t = classify_assignments(parse_update(SKELETON), ins, soccer_catalog, mentions)
    assert set(t.direct) == {"club_name", "club_code"}
    assert {"stadium_name", "competition_country"} <= set(t.cascade)
    assert {"foreigners_percentage", "squad_size"} <= set(t.derived)


def test_literal_only_skeleton_is_all_direct(soccer_catalog):
    ins = render_instruction("soccer", MESSI)
    sk = parse_update("UPDATE player_record SET club_code = 'psg', last_name = 'MESSI ' "
                      "WHERE player_code = 'lionel-messi'")
    t = classify_assignments(sk, ins, soccer_catalog, ())
    assert (t.direct, t.cascade, t.derived) == (("club_code", "last_name"), (), ())


def test_retail_arithmetic_is_derived(retail_catalog):
    ins = render_instruction("retail", RETURN_84978)
    t = classify_assignments(parse_update(RETAIL_MULTISQL), ins, retail_catalog, ())
    assert (t.direct, t.cascade, t.derived) == ((), (), ("quantity", "y2011q4_quantity"))


# -- compose_update ---------------------------------------------------------------------

def test_skeleton_composition_with_subquery(soccer_catalog):
    sk = parse_update(SKELETON).without(["competition_country", "foreigners_percentage", "squad_size"])
    plan = _plan("SELECT stadium_name FROM player_record WHERE club_code='psg' LIMIT 1", column="stadium_name")
    report = validate_subquery(plan, "postgresql", soccer_catalog)
    composed = compose_update(sk, {"stadium_name": SubqueryPlan("stadium_name", plan.select, report.evidence)},
                              "postgresql", soccer_catalog)
    assert ('"stadium_name" = (SELECT "stadium_name" FROM "player_record" WHERE "club_code" = \'psg\' LIMIT 1)'
            in composed.sql_text)
    assert parse_update(composed.sql_text) == composed.skeleton


def test_no_placeholders_is_canonical_identity(retail_catalog):
    sk = parse_update(RETAIL_MULTISQL)
    composed = compose_update(sk, {}, "postgresql", retail_catalog)
    assert composed.skeleton == sk
    assert composed.sql_text == compose_update(parse_update(composed.sql_text), {}, "postgresql").sql_text


def test_unresolved_placeholder_is_named(soccer_catalog):
    with pytest.raises(CompositionError, match="stadium_name"):
        compose_update(parse_update(SKELETON), {}, "postgresql", soccer_catalog)


def test_unvalidated_subquery_rejected(soccer_catalog):
    plan = _plan("SELECT stadium_name FROM player_record LIMIT 1", column="stadium_name")
    sk = parse_update("UPDATE player_record SET stadium_name = ? WHERE player_id = 1")
    with pytest.raises(CompositionError, match="not validated"):
        compose_update(sk, {"stadium_name": plan}, "postgresql", soccer_catalog)


def test_inline_subquery_without_evidence_rejected(soccer_catalog):
    sk = parse_update("UPDATE player_record SET coach_name = (SELECT coach_name FROM player_record "
                      "WHERE club_code = 'psg') WHERE player_id = 1")
    with pytest.raises(CompositionError, match="cardinality"):
        compose_update(sk, {}, "postgresql", soccer_catalog)


@pytest.mark.parametrize("dialect,clause", [("postgresql", "LIMIT 1"), ("mysql", "LIMIT 1"),
                                            ("sqlserver", "TOP 1")])
def test_limit_form_follows_dialect(soccer_catalog, dialect, clause):
    sk = parse_update(SKELETON).without(["competition_country", "foreigners_percentage", "squad_size"])
    plan = SubqueryPlan("stadium_name", parse_query(
        "SELECT stadium_name FROM player_record WHERE club_code='psg' LIMIT 1"), "limit-one-clause")
    composed = compose_update(sk, {"stadium_name": plan}, dialect, soccer_catalog)
    assert clause in composed.sql_text
    assert parse_update(composed.sql_text, dialect) == composed.skeleton
    assert Dialect.parse(dialect).limit_form == clause.split()[0].lower()


# -- properties -------------------------------------------------------------------------

_SCALARS = [
    "SELECT coach_name FROM player_record WHERE club_code = 'psg' LIMIT 1",
    "SELECT count(*) FROM player_record WHERE club_code = 'psg'",
    "SELECT avg(age) FROM player_record p WHERE p.club_code = player_record.club_code",
    "SELECT stadium_name FROM player_record WHERE player_id = 3",
]
_text = st.text(alphabet=st.characters(codec="utf-8", exclude_categories=("Cs", "Cc")), max_size=20)
_literals = st.one_of(
    _text.map(ast.Literal.of),
    st.integers(-10**6, 10**6).map(ast.Literal.of),
    st.decimals(min_value=-1000, max_value=1000, places=2, allow_nan=False).map(ast.Literal.of),
    st.just(ast.Literal.of(None)),
)


@st.composite
def skeletons(draw, catalog):
    table = catalog.table("player_record")
    cols = draw(st.lists(st.sampled_from(table.column_names), min_size=1, max_size=8, unique=True))
    assignments, resolved = [], {}
    for col in cols:
        kind = draw(st.sampled_from(["literal", "placeholder-literal", "placeholder-subquery", "arith", "subquery"]))
        if kind == "literal":
            assignments.append(Assignment(col, draw(_literals)))
        elif kind == "arith":
            assignments.append(Assignment(col, ArithmeticOnSelf(ast.Column(col), draw(st.sampled_from("+-")),
                                                                ast.Literal.of(draw(st.integers(0, 99))))))
        elif kind == "subquery":
            assignments.append(Assignment(col, Subquery(parse_query(draw(st.sampled_from(_SCALARS))))))
        else:
            assignments.append(Assignment(col, ast.Placeholder()))
            if kind == "placeholder-literal":
                resolved[col] = draw(_literals)
            else:
                resolved[col] = SubqueryPlan(col, parse_query(draw(st.sampled_from(_SCALARS))), "checked")
    code = draw(_text.filter(lambda s: s.strip()))
    where = ast.Binary("=", ast.Column("player_code"), ast.Literal.of(code))
    return UpdateSkeleton("player_record", tuple(assignments), where), resolved


def _resolved_skeleton(sk, resolved):
    out = []
    for a in sk.assignments:
        r = resolved.get(a.column)
        if isinstance(r, SubqueryPlan):
            out.append(Assignment(a.column, Subquery(r.select)))
        elif r is not None:
            out.append(Assignment(a.column, r))
        else:
            out.append(a)
    return UpdateSkeleton(sk.table, tuple(out), sk.where, sk.alias)


@settings(max_examples=150, deadline=None)
@given(st.data(), st.sampled_from(["postgresql", "mysql", "sqlserver"]))
def test_compose_round_trip(soccer_catalog, data, dialect):
    sk, resolved = data.draw(skeletons(soccer_catalog))
    composed = compose_update(sk, resolved, dialect, soccer_catalog)
    assert parse_update(composed.sql_text, dialect) == _resolved_skeleton(sk, resolved)
    assert "?" not in [t.value for t in tokenize(composed.sql_text) if t.kind != STRING]


@settings(max_examples=150, deadline=None)
@given(st.data())
def test_quoting_policy(soccer_catalog, data):
    sk, resolved = data.draw(skeletons(soccer_catalog))
    composed = compose_update(sk, resolved, "postgresql", soccer_catalog)
    names = set(soccer_catalog.table("player_record").column_names) | {"player_record", "p"}
    strings = {str(lit.value) for lit in _walk_literals(composed.skeleton) if lit.kind == "string"}
    for tok in tokenize(composed.sql_text):
        if tok.kind == IDENT:
            # bare words are keywords or function names, never identifiers
            assert tok.value.upper() in RESERVED | {"COUNT", "AVG"} or tok.value.lower() not in names
        elif tok.kind == QIDENT:
            assert tok.value in names
        elif tok.kind == STRING:
            assert tok.value in strings


def _walk_literals(sk):
    for n in ast.walk(sk.to_ast()):
        if isinstance(n, ast.Literal):
            yield n


@settings(max_examples=200, deadline=None)
@given(st.data())
def test_partition_totality(soccer_catalog, data):
    sk, _ = data.draw(skeletons(soccer_catalog))
    facts = data.draw(st.lists(_text, max_size=4))
    mentions = data.draw(st.lists(st.sampled_from(sk.columns), max_size=3))

    class Ins:
        pass

    ins = Ins()
    ins.facts = tuple(("f", f) for f in facts)
    t = classify_assignments(sk, ins, soccer_catalog, mentions)
    groups = [set(t.direct), set(t.cascade), set(t.derived)]
    assert sum(map(len, groups)) == len(sk.assignments)
    assert set().union(*groups) == set(sk.columns)
    assert not (groups[0] & groups[1] or groups[0] & groups[2] or groups[1] & groups[2])


def test_subquery_plans_cover_every_subquery(soccer_catalog):
    sk = parse_update("UPDATE player_record SET coach_name = (SELECT coach_name FROM player_record LIMIT 1), "
                      "age = age + (SELECT max(age) FROM player_record) WHERE player_id = 1")
    assert [p.column for p in subquery_plans(sk)] == ["coach_name", "age"]


def test_decimal_literals_keep_scale():
    sk = parse_update("UPDATE t SET a = 1.50 WHERE b = 1")
    assert sk.value("a") == ast.Literal(Decimal("1.50"), "number")


def test_composition_checks_dialect_inside_set_values(soccer_catalog):
    sk = parse_update("UPDATE player_record SET coach_name = (SELECT count(*) FILTER (WHERE age > 30) "
                      "FROM player_record) WHERE player_id = 1")
    assert compose_update(sk, {}, "postgresql", soccer_catalog)
    with pytest.raises(CompositionError, match="FILTER is not valid in sqlserver"):
        compose_update(sk, {}, "sqlserver", soccer_catalog)
