"""Expression and query AST.

Identifiers are stored canonically: unquoted names lowercased, quoted names
verbatim. Fields marked ``compare=False`` record surface syntax only (e.g.
whether a row limit was written ``LIMIT`` or ``TOP``) so that a statement
rendered for another dialect reparses to an equal tree.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from decimal import Decimal
from typing import Iterator, Union


@dataclass(frozen=True)
class Literal:
    value: Union[str, int, Decimal, bool, None]
    kind: str  # "string" | "number" | "bool" | "null"

    @classmethod
    def of(cls, value) -> "Literal":
        if value is None:
            return cls(None, "null")
        if isinstance(value, bool):
            return cls(value, "bool")
        if isinstance(value, (int, Decimal)):
            return cls(value, "number")
        if isinstance(value, float):
            return cls(Decimal(repr(value)), "number")
        return cls(str(value), "string")


@dataclass(frozen=True)
class Placeholder:
    pass


@dataclass(frozen=True)
class Column:
    name: str
    table: str | None = None


@dataclass(frozen=True)
class Star:
    table: str | None = None


@dataclass(frozen=True)
class Unary:
    op: str  # "-", "+", "NOT"
    operand: "Expr"


@dataclass(frozen=True)
class Binary:
    op: str  # arithmetic, comparison, AND, OR, ||, LIKE, NOT LIKE, ILIKE, NOT ILIKE
    left: "Expr"
    right: "Expr"


@dataclass(frozen=True)
class IsNull:
    operand: "Expr"
    negated: bool = False


@dataclass(frozen=True)
class IsDistinct:
    left: "Expr"
    right: "Expr"
    negated: bool = False  # True for IS NOT DISTINCT FROM


@dataclass(frozen=True)
class Between:
    operand: "Expr"
    low: "Expr"
    high: "Expr"
    negated: bool = False


@dataclass(frozen=True)
class InList:
    operand: "Expr"
    items: tuple
    negated: bool = False


@dataclass(frozen=True)
class InSubquery:
    operand: "Expr"
    query: "Query"
    negated: bool = False


@dataclass(frozen=True)
class Exists:
    query: "Query"
    negated: bool = False


@dataclass(frozen=True)
class OrderItem:
    expr: "Expr"
    descending: bool = False


@dataclass(frozen=True)
class Window:
    partition_by: tuple = ()
    order_by: tuple = ()


@dataclass(frozen=True)
class Function:
    name: str  # lowercased
    args: tuple = ()
    star: bool = False  # count(*)
    distinct: bool = False
    filter: "Expr | None" = None
    over: Window | None = None


@dataclass(frozen=True)
class Case:
    operand: "Expr | None"
    whens: tuple  # ((condition, result), ...)
    default: "Expr | None" = None


@dataclass(frozen=True)
class Cast:
    operand: "Expr"
    type_name: str  # canonical upper-case type text
    syntax: str = field(default="cast", compare=False)  # "cast" | "::"


@dataclass(frozen=True)
class ScalarSubquery:
    query: "Query"


# -- queries -----------------------------------------------------------------

@dataclass(frozen=True)
class SelectItem:
    expr: "Expr"
    alias: str | None = None


@dataclass(frozen=True)
class TableRef:
    name: str
    alias: str | None = None


@dataclass(frozen=True)
class DerivedTable:
    query: "Query"
    alias: str


@dataclass(frozen=True)
class Join:
    kind: str  # "INNER", "LEFT", "RIGHT", "FULL", "CROSS"
    left: "FromItem"
    right: "FromItem"
    on: "Expr | None" = None


@dataclass(frozen=True)
class Select:
    items: tuple
    from_: tuple = ()
    where: "Expr | None" = None
    group_by: tuple = ()
    having: "Expr | None" = None
    order_by: tuple = ()
    limit: "Expr | None" = None
    offset: "Expr | None" = None
    distinct: bool = False
    limit_syntax: str | None = field(default=None, compare=False)  # "limit" | "top"


@dataclass(frozen=True)
class Compound:
    op: str  # "UNION", "UNION ALL", "INTERSECT", "EXCEPT"
    left: "Query"
    right: "Query"
    order_by: tuple = ()
    limit: "Expr | None" = None
    offset: "Expr | None" = None
    limit_syntax: str | None = field(default=None, compare=False)


@dataclass(frozen=True)
class Update:
    table: str
    alias: str | None
    assignments: tuple  # ((column, Expr), ...)
    where: "Expr | None"


Expr = Union[Literal, Placeholder, Column, Star, Unary, Binary, IsNull, IsDistinct, Between,
             InList, InSubquery, Exists, Function, Case, Cast, ScalarSubquery]
Query = Union[Select, Compound]
FromItem = Union[TableRef, DerivedTable, Join]

AGGREGATES = frozenset({"count", "sum", "avg", "min", "max", "bool_and", "bool_or", "every",
                        "string_agg", "array_agg", "stddev", "variance", "json_agg",
                        "jsonb_agg"})


def is_aggregate(node) -> bool:
    return isinstance(node, Function) and node.name in AGGREGATES and node.over is None


def children(node) -> Iterator:
    """Direct child nodes of an expression, including nested queries."""
    if isinstance(node, (Unary,)):
        yield node.operand
    elif isinstance(node, Binary):
        yield node.left
        yield node.right
    elif isinstance(node, IsNull):
        yield node.operand
    elif isinstance(node, IsDistinct):
        yield node.left
        yield node.right
    elif isinstance(node, Between):
        yield node.operand
        yield node.low
        yield node.high
    elif isinstance(node, InList):
        yield node.operand
        yield from node.items
    elif isinstance(node, InSubquery):
        yield node.operand
        yield node.query
    elif isinstance(node, Exists):
        yield node.query
    elif isinstance(node, Function):
        yield from node.args
        if node.filter is not None:
            yield node.filter
        if node.over is not None:
            yield from node.over.partition_by
            yield from (o.expr for o in node.over.order_by)
    elif isinstance(node, Case):
        if node.operand is not None:
            yield node.operand
        for cond, result in node.whens:
            yield cond
            yield result
        if node.default is not None:
            yield node.default
    elif isinstance(node, Cast):
        yield node.operand
    elif isinstance(node, ScalarSubquery):
        yield node.query
    elif isinstance(node, Select):
        for item in node.items:
            yield item.expr
        for f in node.from_:
            yield f
        for part in (node.where, node.having, node.limit, node.offset):
            if part is not None:
                yield part
        yield from node.group_by
        yield from (o.expr for o in node.order_by)
    elif isinstance(node, Compound):
        yield node.left
        yield node.right
        yield from (o.expr for o in node.order_by)
        for part in (node.limit, node.offset):
            if part is not None:
                yield part
    elif isinstance(node, DerivedTable):
        yield node.query
    elif isinstance(node, Join):
        yield node.left
        yield node.right
        if node.on is not None:
            yield node.on
    elif isinstance(node, Update):
        for _, value in node.assignments:
            yield value
        if node.where is not None:
            yield node.where


def walk(node) -> Iterator:
    """Pre-order traversal over an expression or query tree."""
    yield node
    for child in children(node):
        yield from walk(child)


def walk_shallow(node) -> Iterator:
    """Like :func:`walk` but does not descend into nested queries."""
    yield node
    for child in children(node):
        if isinstance(child, (Select, Compound, DerivedTable)):
            continue
        yield from walk_shallow(child)
