"""Canonical SQL rendering.

Identifiers are always double-quoted, string literals single-quoted, and
parentheses are emitted only where operator precedence requires them, so
``parse(render(tree)) == tree`` for every tree the parser can produce.
"""

from __future__ import annotations

from decimal import Decimal

from castle.dialects import Dialect
from castle.errors import CompositionError
from castle.sql import ast

_PREC_OR, _PREC_AND, _PREC_NOT, _PREC_IS, _PREC_CMP, _PREC_PRED, _PREC_CONCAT, _PREC_ADD, \
    _PREC_MUL, _PREC_UNARY, _PREC_ATOM = range(1, 12)

_BINARY_PREC = {
    "OR": _PREC_OR, "AND": _PREC_AND,
    "=": _PREC_CMP, "<>": _PREC_CMP, "<": _PREC_CMP, ">": _PREC_CMP, "<=": _PREC_CMP,
    ">=": _PREC_CMP,
    "LIKE": _PREC_PRED, "NOT LIKE": _PREC_PRED, "ILIKE": _PREC_PRED, "NOT ILIKE": _PREC_PRED,
    "||": _PREC_CONCAT, "+": _PREC_ADD, "-": _PREC_ADD, "*": _PREC_MUL, "/": _PREC_MUL,
    "%": _PREC_MUL,
}


def quote_ident(name: str) -> str:
    return '"' + name.replace('"', '""') + '"'


def quote_string(value: str) -> str:
    return "'" + value.replace("'", "''") + "'"


def _number(value) -> str:
    if isinstance(value, Decimal):
        return str(value)
    return str(int(value))


def precedence(node) -> int:
    if isinstance(node, ast.Binary):
        return _BINARY_PREC[node.op]
    if isinstance(node, ast.Unary):
        return _PREC_NOT if node.op == "NOT" else _PREC_UNARY
    if isinstance(node, (ast.IsNull, ast.IsDistinct)):
        return _PREC_IS
    if isinstance(node, (ast.Between, ast.InList, ast.InSubquery)):
        return _PREC_PRED
    if isinstance(node, ast.Literal) and node.kind == "number" and node.value < 0:
        return _PREC_UNARY
    return _PREC_ATOM


class Renderer:
    def __init__(self, dialect: Dialect | str = Dialect.POSTGRESQL):
        self.dialect = Dialect.parse(dialect)

    def wrap(self, node, minimum: int) -> str:
        text = self.expr(node)
        return f"({text})" if precedence(node) < minimum else text

    def expr(self, node) -> str:
        if isinstance(node, ast.Literal):
            if node.kind == "null":
                return "NULL"
            if node.kind == "bool":
                return "TRUE" if node.value else "FALSE"
            if node.kind == "number":
                return _number(node.value)
            return quote_string(node.value)
        if isinstance(node, ast.Placeholder):
            return "?"
        if isinstance(node, ast.Column):
            if node.table:
                return f"{quote_ident(node.table)}.{quote_ident(node.name)}"
            return quote_ident(node.name)
        if isinstance(node, ast.Star):
            return f"{quote_ident(node.table)}.*" if node.table else "*"
        if isinstance(node, ast.Binary):
            p = _BINARY_PREC[node.op]
            if p == _PREC_CMP:
                return f"{self.wrap(node.left, _PREC_PRED)} {node.op} {self.wrap(node.right, _PREC_PRED)}"
            if p == _PREC_PRED:
                return f"{self.wrap(node.left, _PREC_CONCAT)} {node.op} {self.wrap(node.right, _PREC_CONCAT)}"
            return f"{self.wrap(node.left, p)} {node.op} {self.wrap(node.right, p + 1)}"
        if isinstance(node, ast.Unary):
            if node.op == "NOT":
                return f"NOT {self.wrap(node.operand, _PREC_NOT)}"
            inner = self.wrap(node.operand, _PREC_UNARY)
            sep = " " if inner.startswith(("-", "+")) else ""
            return f"{node.op}{sep}{inner}"
        if isinstance(node, ast.IsNull):
            return f"{self.wrap(node.operand, _PREC_IS)} IS {'NOT ' if node.negated else ''}NULL"
        if isinstance(node, ast.IsDistinct):
            kw = "IS NOT DISTINCT FROM" if node.negated else "IS DISTINCT FROM"
            return f"{self.wrap(node.left, _PREC_IS)} {kw} {self.wrap(node.right, _PREC_CMP)}"
        if isinstance(node, ast.Between):
            kw = "NOT BETWEEN" if node.negated else "BETWEEN"
            return (f"{self.wrap(node.operand, _PREC_CONCAT)} {kw} {self.wrap(node.low, _PREC_CONCAT)}"
                    f" AND {self.wrap(node.high, _PREC_CONCAT)}")
        if isinstance(node, ast.InList):
            kw = "NOT IN" if node.negated else "IN"
            items = ", ".join(self.expr(i) for i in node.items)
            return f"{self.wrap(node.operand, _PREC_CONCAT)} {kw} ({items})"
        if isinstance(node, ast.InSubquery):
            kw = "NOT IN" if node.negated else "IN"
            return f"{self.wrap(node.operand, _PREC_CONCAT)} {kw} ({self.query(node.query)})"
        if isinstance(node, ast.Exists):
            return f"{'NOT ' if node.negated else ''}EXISTS ({self.query(node.query)})"
        if isinstance(node, ast.Function):
            return self.function(node)
        if isinstance(node, ast.Case):
            parts = ["CASE"]
            if node.operand is not None:
                parts.append(self.expr(node.operand))
            for cond, result in node.whens:
                parts.append(f"WHEN {self.expr(cond)} THEN {self.expr(result)}")
            if node.default is not None:
                parts.append(f"ELSE {self.expr(node.default)}")
            parts.append("END")
            return " ".join(parts)
        if isinstance(node, ast.Cast):
            return f"CAST({self.expr(node.operand)} AS {node.type_name})"
        if isinstance(node, ast.ScalarSubquery):
            return f"({self.query(node.query)})"
        raise CompositionError(f"cannot render node {type(node).__name__}")

    def function(self, node: ast.Function) -> str:
        if node.star:
            args = "*"
        else:
            args = ", ".join(self.expr(a) for a in node.args)
            if node.distinct:
                args = "DISTINCT " + args
        text = f"{node.name.upper()}({args})"
        if node.filter is not None:
            text += f" FILTER (WHERE {self.expr(node.filter)})"
        if node.over is not None:
            parts = []
            if node.over.partition_by:
                parts.append("PARTITION BY " + ", ".join(self.expr(e) for e in node.over.partition_by))
            if node.over.order_by:
                parts.append("ORDER BY " + self.order(node.over.order_by))
            text += f" OVER ({' '.join(parts)})"
        return text

    def order(self, items) -> str:
        return ", ".join(self.expr(o.expr) + (" DESC" if o.descending else "") for o in items)

    # -- queries -----------------------------------------------------------------

    def query(self, node) -> str:
        if isinstance(node, ast.Compound):
            return self.compound(node)
        return self.select(node)

    def _tail(self, order_by, limit, offset, *, allow_top: bool) -> tuple[str, str]:
        """Return (top_prefix, tail_suffix) for the dialect."""
        tail = ""
        if order_by:
            tail += " ORDER BY " + self.order(order_by)
        top = ""
        if self.dialect.limit_form == "top":
            if offset is not None:
                raise CompositionError("OFFSET cannot be rendered for sqlserver without FETCH")
            if limit is not None:
                if not allow_top:
                    raise CompositionError("a row limit on a set operation cannot be rendered as TOP")
                if isinstance(limit, ast.Literal) and limit.kind == "number":
                    top = f"TOP {self.expr(limit)} "
                else:
                    top = f"TOP ({self.expr(limit)}) "
        else:
            if limit is not None:
                tail += f" LIMIT {self.expr(limit)}"
            if offset is not None:
                tail += f" OFFSET {self.expr(offset)}"
        return top, tail

    def select(self, node: ast.Select) -> str:
        top, tail = self._tail(node.order_by, node.limit, node.offset, allow_top=True)
        items = []
        for item in node.items:
            text = self.expr(item.expr)
            if item.alias:
                text += f" AS {quote_ident(item.alias)}"
            items.append(text)
        sql = "SELECT " + top + ("DISTINCT " if node.distinct else "") + ", ".join(items)
        if node.from_:
            sql += " FROM " + ", ".join(self.from_item(f) for f in node.from_)
        if node.where is not None:
            sql += " WHERE " + self.expr(node.where)
        if node.group_by:
            sql += " GROUP BY " + ", ".join(self.expr(g) for g in node.group_by)
        if node.having is not None:
            sql += " HAVING " + self.expr(node.having)
        return sql + tail

    def _operand(self, node, parent_op: str, side: str) -> str:
        text = self.query(node)
        needs = False
        if isinstance(node, ast.Select):
            needs = bool(node.order_by) or node.limit is not None or node.offset is not None
        elif isinstance(node, ast.Compound):
            needs = side == "right" or node.op != parent_op or bool(node.order_by) \
                or node.limit is not None or node.offset is not None
        return f"({text})" if needs else text

    def compound(self, node: ast.Compound) -> str:
        _, tail = self._tail(node.order_by, node.limit, node.offset, allow_top=False)
        return (f"{self._operand(node.left, node.op, 'left')} {node.op} "
                f"{self._operand(node.right, node.op, 'right')}{tail}")

    def from_item(self, node) -> str:
        if isinstance(node, ast.TableRef):
            text = quote_ident(node.name)
            return text + (f" AS {quote_ident(node.alias)}" if node.alias else "")
        if isinstance(node, ast.DerivedTable):
            return f"({self.query(node.query)}) AS {quote_ident(node.alias)}"
        if isinstance(node, ast.Join):
            right = self.from_item(node.right)
            if isinstance(node.right, ast.Join):
                raise CompositionError("right-nested joins are not supported")
            text = f"{self.from_item(node.left)} {node.kind} JOIN {right}"
            if node.on is not None:
                text += f" ON {self.expr(node.on)}"
            return text
        raise CompositionError(f"cannot render FROM item {type(node).__name__}")

    def update(self, node: ast.Update, *, pretty: bool = True) -> str:
        head = f"UPDATE {quote_ident(node.table)}"
        if node.alias:
            head += f" AS {quote_ident(node.alias)}"
        sets = [f"{quote_ident(col)} = {self.expr(value)}" for col, value in node.assignments]
        sep = ",\n    " if pretty else ", "
        nl = "\n" if pretty else " "
        sql = f"{head}{nl}SET {sep.join(sets)}"
        if node.where is not None:
            sql += f"{nl}WHERE {self.expr(node.where)}"
        return sql + ";"


def render_expr(node, dialect: Dialect | str = Dialect.POSTGRESQL) -> str:
    return Renderer(dialect).expr(node)


def render_query(node, dialect: Dialect | str = Dialect.POSTGRESQL) -> str:
    return Renderer(dialect).query(node)


def render_update(node: ast.Update, dialect: Dialect | str = Dialect.POSTGRESQL, *,
                  pretty: bool = True) -> str:
    return Renderer(dialect).update(node, pretty=pretty)
