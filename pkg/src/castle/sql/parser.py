"""Recursive-descent parser for the SQL subset used by cascade updates.

Covers UPDATE ... SET ... WHERE, SELECT (with joins, derived tables, GROUP BY,
HAVING, ORDER BY, LIMIT/OFFSET and SQL Server TOP), set operations, and the
usual scalar expression grammar including CASE, CAST, FILTER and OVER.
"""

from __future__ import annotations

from decimal import Decimal

from castle.dialects import Dialect
from castle.errors import SqlSyntaxError
from castle.sql import ast
from castle.sql.lexer import DOLLAR, EOF, IDENT, NUMBER, OP, PARAM, QIDENT, STRING, Token, tokenize

RESERVED = frozenset("""
    ALL AND AS ASC BETWEEN BY CASE CAST CROSS DESC DISTINCT ELSE END EXCEPT EXISTS FALSE FILTER
    FROM FULL GROUP HAVING ILIKE IN INNER INTERSECT IS JOIN LEFT LIKE LIMIT NOT NULL OFFSET ON OR
    ORDER OUTER OVER RIGHT SELECT SET THEN TOP TRUE UNION UPDATE WHEN WHERE WITH RETURNING
""".split())

_COMPARISON = ("=", "<>", "!=", "<", ">", "<=", ">=")


class Parser:
    def __init__(self, text: str, dialect: Dialect | str = Dialect.POSTGRESQL):
        self.text = text
        self.dialect = Dialect.parse(dialect)
        self.tokens = tokenize(text, brackets=self.dialect is Dialect.SQLSERVER)
        self.pos = 0

    # -- token helpers ---------------------------------------------------------

    def peek(self, offset: int = 0) -> Token:
        return self.tokens[min(self.pos + offset, len(self.tokens) - 1)]

    def advance(self) -> Token:
        tok = self.peek()
        if tok.kind != EOF:
            self.pos += 1
        return tok

    def error(self, message: str, tok: Token | None = None) -> SqlSyntaxError:
        tok = tok or self.peek()
        return SqlSyntaxError(message, line=tok.line, col=tok.col,
                              token=tok.value if tok.kind != EOF else "<end of input>")

    def accept_kw(self, *words: str) -> Token | None:
        if self.peek().is_kw(*words):
            return self.advance()
        return None

    def expect_kw(self, *words: str) -> Token:
        tok = self.accept_kw(*words)
        if tok is None:
            raise self.error(f"expected {' or '.join(words)}")
        return tok

    def accept_op(self, *ops: str) -> Token | None:
        if self.peek().is_op(*ops):
            return self.advance()
        return None

    def expect_op(self, op: str) -> Token:
        tok = self.accept_op(op)
        if tok is None:
            raise self.error(f"expected {op!r}")
        return tok

    def at_end(self) -> bool:
        return self.peek().kind == EOF

    def identifier(self, what: str = "identifier") -> str:
        tok = self.peek()
        if tok.kind == QIDENT:
            self.advance()
            return tok.value
        if tok.kind == IDENT and tok.value.upper() not in RESERVED:
            self.advance()
            return tok.value.lower()
        raise self.error(f"expected {what}")

    def _is_identifier(self, tok: Token) -> bool:
        return tok.kind == QIDENT or (tok.kind == IDENT and tok.value.upper() not in RESERVED)

    def finish(self) -> None:
        self.accept_op(";")
        if not self.at_end():
            raise self.error("unexpected trailing input (multiple statements?)")

    # -- statements ------------------------------------------------------------

    def statement(self):
        tok = self.peek()
        if tok.is_kw("UPDATE"):
            return self.update()
        if tok.is_kw("SELECT") or tok.is_op("("):
            return self.query()
        raise self.error("expected UPDATE or SELECT")

    def update(self) -> ast.Update:
        self.expect_kw("UPDATE")
        table = self.qualified_table_name()
        alias = None
        if self.accept_kw("AS"):
            alias = self.identifier("alias")
        elif self._is_identifier(self.peek()):
            alias = self.identifier("alias")
        self.expect_kw("SET")
        assignments = []
        while True:
            col = self.identifier("column name")
            if self.accept_op("."):
                col = self.identifier("column name")
            self.expect_op("=")
            assignments.append((col, self.expr()))
            if not self.accept_op(","):
                break
        where = None
        if self.accept_kw("WHERE"):
            where = self.expr()
        if self.peek().is_kw("FROM", "RETURNING"):
            raise self.error(f"UPDATE ... {self.peek().value.upper()} is not supported")
        return ast.Update(table, alias, tuple(assignments), where)

    def qualified_table_name(self) -> str:
        name = self.identifier("table name")
        while self.accept_op("."):
            # schema-qualified names keep only the relation name
            name = self.identifier("table name")
        return name

    # -- queries -----------------------------------------------------------------

    def query(self):
        left = self.query_term()
        while True:
            tok = self.peek()
            if tok.is_kw("UNION", "INTERSECT", "EXCEPT"):
                self.advance()
                op = tok.value.upper()
                if op == "UNION" and self.accept_kw("ALL"):
                    op = "UNION ALL"
                else:
                    self.accept_kw("DISTINCT")
                right = self.query_term()
                left = ast.Compound(op, left, right)
            else:
                break
        order_by, limit, offset, syntax = self.query_tail()
        if isinstance(left, ast.Compound):
            if order_by or limit is not None or offset is not None:
                left = ast.Compound(left.op, left.left, left.right, order_by, limit, offset, syntax)
        elif order_by or limit is not None or offset is not None:
            left = _replace(left, order_by=order_by or left.order_by,
                            limit=limit if limit is not None else left.limit,
                            offset=offset if offset is not None else left.offset,
                            limit_syntax=syntax or left.limit_syntax)
        return left

    def query_term(self):
        if self.accept_op("("):
            q = self.query()
            self.expect_op(")")
            return q
        return self.select_core()

    def query_tail(self):
        order_by: tuple = ()
        limit = offset = None
        syntax = None
        if self.peek().is_kw("ORDER"):
            self.advance()
            self.expect_kw("BY")
            order_by = self.order_list()
        if self.accept_kw("LIMIT"):
            limit = self.expr()
            syntax = "limit"
            if self.accept_op(","):  # MySQL "LIMIT offset, count"
                offset, limit = limit, self.expr()
        if self.accept_kw("OFFSET"):
            offset = self.expr()
            self.accept_kw("ROWS", "ROW")
        return order_by, limit, offset, syntax

    def order_list(self) -> tuple:
        items = []
        while True:
            e = self.expr()
            desc = False
            if self.accept_kw("DESC"):
                desc = True
            else:
                self.accept_kw("ASC")
            if self.peek().is_kw("NULLS"):
                raise self.error("NULLS FIRST/LAST is not supported")
            items.append(ast.OrderItem(e, desc))
            if not self.accept_op(","):
                return tuple(items)

    def select_core(self) -> ast.Select:
        self.expect_kw("SELECT")
        limit = None
        syntax = None
        if self.peek().is_kw("TOP") and (self.peek(1).kind == NUMBER or self.peek(1).is_op("(")):
            self.advance()
            if self.accept_op("("):
                limit = self.expr()
                self.expect_op(")")
            else:
                limit = self.primary()
            syntax = "top"
        distinct = False
        if self.accept_kw("DISTINCT"):
            distinct = True
        else:
            self.accept_kw("ALL")
        items = [self.select_item()]
        while self.accept_op(","):
            items.append(self.select_item())
        from_: list = []
        if self.accept_kw("FROM"):
            from_.append(self.from_item())
            while self.accept_op(","):
                from_.append(self.from_item())
        where = self.expr() if self.accept_kw("WHERE") else None
        group_by: list = []
        if self.peek().is_kw("GROUP"):
            self.advance()
            self.expect_kw("BY")
            group_by.append(self.expr())
            while self.accept_op(","):
                group_by.append(self.expr())
        having = self.expr() if self.accept_kw("HAVING") else None
        return ast.Select(tuple(items), tuple(from_), where, tuple(group_by), having,
                          limit=limit, distinct=distinct, limit_syntax=syntax)

    def select_item(self) -> ast.SelectItem:
        e = self.expr()
        alias = None
        if self.accept_kw("AS"):
            alias = self.identifier("alias")
        elif self._is_identifier(self.peek()):
            alias = self.identifier("alias")
        return ast.SelectItem(e, alias)

    def from_item(self):
        left = self.from_primary()
        while True:
            tok = self.peek()
            kind = None
            if tok.is_kw("JOIN"):
                kind = "INNER"
                self.advance()
            elif tok.is_kw("INNER", "LEFT", "RIGHT", "FULL", "CROSS"):
                kind = tok.value.upper()
                self.advance()
                self.accept_kw("OUTER")
                self.expect_kw("JOIN")
            else:
                return left
            right = self.from_primary()
            on = None
            if kind != "CROSS":
                self.expect_kw("ON")
                on = self.expr()
            left = ast.Join(kind, left, right, on)

    def from_primary(self):
        if self.peek().is_op("(") and (self.peek(1).is_kw("SELECT") or self.peek(1).is_op("(")):
            self.advance()
            q = self.query()
            self.expect_op(")")
            self.accept_kw("AS")
            if not self._is_identifier(self.peek()):
                raise self.error("derived table requires an alias")
            return ast.DerivedTable(q, self.identifier("alias"))
        name = self.qualified_table_name()
        alias = None
        if self.accept_kw("AS"):
            alias = self.identifier("alias")
        elif self._is_identifier(self.peek()):
            alias = self.identifier("alias")
        return ast.TableRef(name, alias)

    # -- expressions ---------------------------------------------------------------

    def expr(self):
        return self.or_expr()

    def or_expr(self):
        left = self.and_expr()
        while self.accept_kw("OR"):
            left = ast.Binary("OR", left, self.and_expr())
        return left

    def and_expr(self):
        left = self.not_expr()
        while self.accept_kw("AND"):
            left = ast.Binary("AND", left, self.not_expr())
        return left

    def not_expr(self):
        if self.peek().is_kw("NOT") and not self.peek(1).is_kw("EXISTS"):
            self.advance()
            return ast.Unary("NOT", self.not_expr())
        return self.is_expr()

    def is_expr(self):
        left = self.comparison()
        while self.peek().is_kw("IS"):
            self.advance()
            negated = bool(self.accept_kw("NOT"))
            if self.accept_kw("NULL"):
                left = ast.IsNull(left, negated)
            elif self.accept_kw("DISTINCT"):
                self.expect_kw("FROM")
                left = ast.IsDistinct(left, self.comparison(), negated)
            elif self.peek().is_kw("TRUE", "FALSE"):
                val = self.advance().value.upper() == "TRUE"
                cmp = ast.Binary("=", left, ast.Literal(val, "bool"))
                left = ast.Unary("NOT", cmp) if negated else cmp
            else:
                raise self.error("expected NULL or DISTINCT FROM after IS")
        return left

    def comparison(self):
        left = self.predicate()
        tok = self.peek()
        if tok.kind == OP and tok.value in _COMPARISON:
            self.advance()
            op = "<>" if tok.value == "!=" else tok.value
            return ast.Binary(op, left, self.predicate())
        return left

    def predicate(self):
        left = self.concat()
        negated = False
        if self.peek().is_kw("NOT") and self.peek(1).is_kw("BETWEEN", "IN", "LIKE", "ILIKE"):
            self.advance()
            negated = True
        tok = self.peek()
        if tok.is_kw("BETWEEN"):
            self.advance()
            if self.peek().is_kw("SYMMETRIC"):
                raise self.error("BETWEEN SYMMETRIC is not supported")
            low = self.concat()
            self.expect_kw("AND")
            return ast.Between(left, low, self.concat(), negated)
        if tok.is_kw("IN"):
            self.advance()
            self.expect_op("(")
            if self.peek().is_kw("SELECT"):
                q = self.query()
                self.expect_op(")")
                return ast.InSubquery(left, q, negated)
            items = [self.expr()]
            while self.accept_op(","):
                items.append(self.expr())
            self.expect_op(")")
            return ast.InList(left, tuple(items), negated)
        if tok.is_kw("LIKE", "ILIKE"):
            self.advance()
            op = ("NOT " if negated else "") + tok.value.upper()
            return ast.Binary(op, left, self.concat())
        if negated:
            raise self.error("expected BETWEEN, IN or LIKE after NOT")
        return left

    def concat(self):
        left = self.additive()
        while self.accept_op("||"):
            left = ast.Binary("||", left, self.additive())
        return left

    def additive(self):
        left = self.multiplicative()
        while True:
            tok = self.accept_op("+", "-")
            if tok is None:
                return left
            left = ast.Binary(tok.value, left, self.multiplicative())

    def multiplicative(self):
        left = self.unary()
        while True:
            tok = self.accept_op("*", "/", "%")
            if tok is None:
                return left
            left = ast.Binary(tok.value, left, self.unary())

    def unary(self):
        tok = self.accept_op("-", "+")
        if tok is None:
            return self.postfix()
        operand = self.unary()
        if isinstance(operand, ast.Literal) and operand.kind == "number":
            return operand if tok.value == "+" else ast.Literal(-operand.value, "number")
        return ast.Unary(tok.value, operand)

    def postfix(self):
        e = self.primary()
        while self.accept_op("::"):
            e = ast.Cast(e, self.type_name(), syntax="::")
        return e

    def type_name(self) -> str:
        words = []
        while self.peek().kind == IDENT and (not words or self.peek().value.upper() in _TYPE_WORDS):
            words.append(self.advance().value.upper())
        if not words:
            raise self.error("expected type name")
        name = " ".join(words)
        if self.accept_op("("):
            params = [self.advance().value]
            while self.accept_op(","):
                params.append(self.advance().value)
            self.expect_op(")")
            name += "(" + ",".join(params) + ")"
        return name

    def primary(self):
        tok = self.peek()
        if tok.kind == NUMBER:
            self.advance()
            text = tok.value
            if any(c in text for c in ".eE"):
                return ast.Literal(Decimal(text), "number")
            return ast.Literal(int(text), "number")
        if tok.kind == STRING:
            self.advance()
            return ast.Literal(tok.value, "string")
        if tok.kind == DOLLAR:
            self.advance()
            return ast.Literal(tok.value, "string")
        if tok.kind == PARAM:
            self.advance()
            return ast.Placeholder()
        if tok.is_op("*"):
            self.advance()
            return ast.Star()
        if tok.is_op("("):
            self.advance()
            if self.peek().is_kw("SELECT") or self.peek().is_op("(") and self._looks_like_query():
                q = self.query()
                self.expect_op(")")
                return ast.ScalarSubquery(q)
            e = self.expr()
            self.expect_op(")")
            return e
        if tok.is_kw("NULL"):
            self.advance()
            return ast.Literal(None, "null")
        if tok.is_kw("TRUE", "FALSE"):
            self.advance()
            return ast.Literal(tok.value.upper() == "TRUE", "bool")
        if tok.is_kw("CASE"):
            return self.case()
        if tok.is_kw("CAST"):
            self.advance()
            self.expect_op("(")
            operand = self.expr()
            self.expect_kw("AS")
            t = self.type_name()
            self.expect_op(")")
            return ast.Cast(operand, t, syntax="cast")
        if tok.is_kw("EXISTS") or (tok.is_kw("NOT") and self.peek(1).is_kw("EXISTS")):
            negated = bool(self.accept_kw("NOT"))
            self.expect_kw("EXISTS")
            self.expect_op("(")
            q = self.query()
            self.expect_op(")")
            return ast.Exists(q, negated)
        if tok.kind == IDENT and tok.value.upper() in ("DATE", "TIMESTAMP", "INTERVAL") \
                and self.peek(1).kind == STRING:
            self.advance()
            value = self.advance().value
            return ast.Cast(ast.Literal(value, "string"), tok.value.upper(), syntax="literal")
        if tok.kind in (IDENT, QIDENT):
            if tok.kind == IDENT and tok.value.upper() in RESERVED:
                raise self.error("unexpected keyword")
            if tok.kind == IDENT and self.peek(1).is_op("("):
                return self.function()
            name = self.identifier()
            if self.accept_op("."):
                if self.accept_op("*"):
                    return ast.Star(name)
                return ast.Column(self.identifier("column name"), name)
            return ast.Column(name)
        raise self.error("expected expression")

    def _looks_like_query(self) -> bool:
        i = self.pos
        while self.tokens[i].is_op("("):
            i += 1
        return self.tokens[i].is_kw("SELECT")

    def function(self) -> ast.Function:
        name = self.advance().value.lower()
        self.expect_op("(")
        star = distinct = False
        args: list = []
        if self.accept_op("*"):
            star = True
        elif not self.peek().is_op(")"):
            if self.accept_kw("DISTINCT"):
                distinct = True
            else:
                self.accept_kw("ALL")
            args.append(self.expr())
            while self.accept_op(","):
                args.append(self.expr())
        self.expect_op(")")
        filt = None
        if self.peek().is_kw("FILTER"):
            self.advance()
            self.expect_op("(")
            self.expect_kw("WHERE")
            filt = self.expr()
            self.expect_op(")")
        over = None
        if self.accept_kw("OVER"):
            self.expect_op("(")
            partition: list = []
            order: tuple = ()
            if self.peek().is_kw("PARTITION"):
                self.advance()
                self.expect_kw("BY")
                partition.append(self.expr())
                while self.accept_op(","):
                    partition.append(self.expr())
            if self.peek().is_kw("ORDER"):
                self.advance()
                self.expect_kw("BY")
                order = self.order_list()
            self.expect_op(")")
            over = ast.Window(tuple(partition), order)
        return ast.Function(name, tuple(args), star, distinct, filt, over)

    def case(self) -> ast.Case:
        self.expect_kw("CASE")
        operand = None
        if not self.peek().is_kw("WHEN"):
            operand = self.expr()
        whens = []
        while self.accept_kw("WHEN"):
            cond = self.expr()
            self.expect_kw("THEN")
            whens.append((cond, self.expr()))
        if not whens:
            raise self.error("CASE requires at least one WHEN")
        default = self.expr() if self.accept_kw("ELSE") else None
        self.expect_kw("END")
        return ast.Case(operand, tuple(whens), default)


_TYPE_WORDS = frozenset({"PRECISION", "VARYING", "WITH", "WITHOUT", "TIME", "ZONE"})


def _replace(node, **changes):
    from dataclasses import replace
    return replace(node, **changes)


def parse_statement(text: str, dialect: Dialect | str = Dialect.POSTGRESQL):
    """Parse exactly one UPDATE or SELECT statement (trailing ``;`` allowed)."""
    p = Parser(text, dialect)
    if p.at_end():
        raise SqlSyntaxError("empty statement")
    stmt = p.statement()
    p.finish()
    return stmt


def parse_expression(text: str, dialect: Dialect | str = Dialect.POSTGRESQL):
    p = Parser(text, dialect)
    e = p.expr()
    if not p.at_end():
        raise p.error("unexpected trailing input")
    return e


def parse_query(text: str, dialect: Dialect | str = Dialect.POSTGRESQL):
    p = Parser(text, dialect)
    q = p.query()
    p.finish()
    return q
