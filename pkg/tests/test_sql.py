from decimal import Decimal

import pytest
from hypothesis import given, settings, strategies as st

from castle.errors import SqlSyntaxError
from castle.sql import ast
from castle.sql.lexer import split_statements, tokenize
from castle.sql.parser import parse_expression, parse_query, parse_statement
from castle.sql.render import quote_ident, quote_string, render_expr, render_query

DIALECTS = ["postgresql", "mysql", "sqlserver"]


def test_lexer_keeps_quoted_identifiers_verbatim():
    toks = tokenize('SELECT "Mixed Case" FROM t')
    assert [t.value for t in toks][:4] == ["SELECT", "Mixed Case", "FROM", "t"]


def test_syntax_error_position():
    with pytest.raises(SqlSyntaxError) as info:
        parse_expression("a + ")
    assert info.value.line == 1


def test_split_statements_respects_strings_and_dollar_bodies():
    text = "SELECT ';'; CREATE FUNCTION f() RETURNS TRIGGER AS $$ BEGIN x; y; END; $$ LANGUAGE plpgsql;"
    parts = [s for s, _ in split_statements(text) if s.strip()]
    assert len(parts) == 2
    assert parts[1].strip().startswith("CREATE FUNCTION")


def test_quoting_helpers():
    assert quote_ident('we"ird') == '"we""ird"'
    assert quote_string("it's") == "'it''s'"


def test_top_and_limit_parse_to_equal_trees():
    a = parse_query("SELECT TOP 1 a FROM t WHERE b = 1", "sqlserver")
    b = parse_query("SELECT a FROM t WHERE b = 1 LIMIT 1", "postgresql")
    assert a == b
    assert render_query(a, "sqlserver") == 'SELECT TOP 1 "a" FROM "t" WHERE "b" = 1'
    assert render_query(a, "postgresql") == 'SELECT "a" FROM "t" WHERE "b" = 1 LIMIT 1'


def test_update_statement_parses():
    node = parse_statement('UPDATE t SET a = a - 1, "b c" = ? WHERE k = \'x\'')
    assert isinstance(node, ast.Update)
    assert [c for c, _ in node.assignments] == ["a", "b c"]
    assert isinstance(node.assignments[1][1], ast.Placeholder)


# -- round trip ------------------------------------------------------------------------

_idents = st.sampled_from(["a", "b", "club_code", "Mixed", "with space", 'qu"ote', "select"])
_literals = st.one_of(
    st.text(max_size=8).map(ast.Literal.of),
    st.integers(0, 10**9).map(ast.Literal.of),
    st.decimals(min_value=0, max_value=10**6, places=3, allow_nan=False).map(ast.Literal.of),
    st.sampled_from([ast.Literal.of(None), ast.Literal.of(True), ast.Literal.of(False)]),
)
_columns = st.builds(ast.Column, _idents, st.none() | st.sampled_from(["t", "p"]))
_leaves = _literals | _columns


def _tree(children):
    binary_ops = st.sampled_from(["+", "-", "*", "/", "%", "=", "<>", "<", "<=", ">", ">=", "AND", "OR", "||",
                                  "LIKE", "NOT LIKE"])
    return st.one_of(
        st.builds(ast.Binary, binary_ops, children, children),
        st.builds(ast.Unary, st.just("NOT"), children),
        st.builds(ast.IsNull, children, st.booleans()),
        st.builds(ast.IsDistinct, children, children, st.booleans()),
        st.builds(ast.Between, children, children, children, st.booleans()),
        st.builds(ast.InList, children, st.lists(children, min_size=1, max_size=3).map(tuple), st.booleans()),
        st.builds(ast.Function, st.sampled_from(["count", "sum", "avg", "max", "coalesce", "lower"]),
                  st.lists(children, min_size=1, max_size=2).map(tuple)),
        st.builds(ast.Case, st.none() | children,
                  st.lists(st.tuples(children, children), min_size=1, max_size=2).map(tuple),
                  st.none() | children),
        st.builds(ast.Cast, children, st.sampled_from(["INTEGER", "TEXT", "NUMERIC(10,2)"])),
    )


expressions = st.recursive(_leaves, _tree, max_leaves=12)


@st.composite
def selects(draw):
    items = tuple(ast.SelectItem(e, draw(st.none() | st.sampled_from(["x", "y z"])))
                  for e in draw(st.lists(expressions, min_size=1, max_size=3)))
    where = draw(st.none() | expressions)
    limit = draw(st.none() | st.integers(0, 5).map(ast.Literal.of))
    order = tuple(ast.OrderItem(e, draw(st.booleans())) for e in draw(st.lists(_columns, max_size=2)))
    group = tuple(draw(st.lists(_columns, max_size=2)))
    return ast.Select(items, (ast.TableRef("t", draw(st.none() | st.just("p"))),), where, group,
                      None, order, limit)


@settings(max_examples=300, deadline=None)
@given(expressions, st.sampled_from(DIALECTS))
def test_expression_round_trip(expr, dialect):
    assert parse_expression(render_expr(expr, dialect), dialect) == expr


@settings(max_examples=200, deadline=None)
@given(selects(), st.sampled_from(DIALECTS))
def test_query_round_trip(query, dialect):
    text = render_query(query, dialect)
    again = parse_query(text, dialect)
    assert again == query
    assert render_query(again, dialect) == text


def test_decimal_literal_preserves_digits():
    assert parse_expression("1.50") == ast.Literal(Decimal("1.50"), "number")
    assert render_expr(ast.Literal(Decimal("1.50"), "number")) == "1.50"
