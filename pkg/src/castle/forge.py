"""UPDATE skeletons: parsing, subquery validation, assignment classification, composition.

A skeleton is an UPDATE whose SET values are sorted into five kinds: a
literal, a scalar subquery, a ``?`` placeholder awaiting resolution, an
in-place adjustment ``col = col +/- expr``, or any other expression.
"""

from __future__ import annotations

from dataclasses import dataclass
from decimal import Decimal

from castle.dialects import Dialect
from castle.errors import CompositionError, PolicyError, ValidationError
from castle.schema import DERIVED, SchemaCatalog
from castle.sql import ast
from castle.sql.lexer import IDENT, QIDENT, split_statements, tokenize
from castle.sql.parser import parse_statement
from castle.sql.render import render_update

LIMIT_ONE = "limit-one-clause"
SCALAR_AGGREGATE = "scalar-aggregate"
KEY_EQUALITY = "unique-key-equality"

# Functions that return exactly one value per input row; anything else in a
# projection (generate_series, unnest, json_each, ...) may multiply rows.
SCALAR_FUNCTIONS = frozenset({
    "abs", "round", "ceil", "ceiling", "floor", "trunc", "sign", "sqrt", "power", "mod", "ln",
    "exp", "log", "coalesce", "nullif", "greatest", "least", "lower", "upper", "length",
    "char_length", "substr", "substring", "trim", "ltrim", "rtrim", "replace", "concat",
    "left", "right", "lpad", "rpad", "initcap", "to_char", "to_date", "to_number", "now",
    "date_trunc", "date_part", "extract", "isnull", "ifnull", "len", "getdate", "iif",
    "pg_trigger_depth", "current_date", "jsonb_build_object", "json_build_object",
})


# -- value kinds ------------------------------------------------------------------------

@dataclass(frozen=True)
class Subquery:
    query: "ast.Query"

    def to_expr(self):
        return ast.ScalarSubquery(self.query)


@dataclass(frozen=True)
class ArithmeticOnSelf:
    target: ast.Column
    op: str  # "+" or "-"
    operand: "ast.Expr"

    def to_expr(self):
        return ast.Binary(self.op, self.target, self.operand)


@dataclass(frozen=True)
class Expression:
    expr: "ast.Expr"

    def to_expr(self):
        return self.expr


def value_expr(value):
    if isinstance(value, (ast.Literal, ast.Placeholder)):
        return value
    return value.to_expr()


@dataclass(frozen=True)
class Assignment:
    column: str
    value: object  # ast.Literal | ast.Placeholder | Subquery | ArithmeticOnSelf | Expression


@dataclass(frozen=True)
class UpdateSkeleton:
    table: str
    assignments: tuple
    where: "ast.Expr | None"
    alias: str | None = None

    def __post_init__(self):
        seen = set()
        for a in self.assignments:
            if a.column in seen:
                raise PolicyError(f"column {a.column!r} assigned more than once")
            seen.add(a.column)

    @property
    def columns(self) -> tuple:
        return tuple(a.column for a in self.assignments)

    def value(self, column: str):
        for a in self.assignments:
            if a.column == column:
                return a.value
        raise KeyError(column)

    def placeholders(self) -> tuple:
        return tuple(a.column for a in self.assignments if isinstance(a.value, ast.Placeholder))

    def without(self, columns) -> "UpdateSkeleton":
        drop = set(columns)
        return UpdateSkeleton(self.table, tuple(a for a in self.assignments if a.column not in drop),
                              self.where, self.alias)

    def to_ast(self) -> ast.Update:
        return ast.Update(self.table, self.alias,
                          tuple((a.column, value_expr(a.value)) for a in self.assignments), self.where)


def classify_value(column: str, expr, table: str, alias: str | None):
    if isinstance(expr, (ast.Literal, ast.Placeholder)):
        return expr
    if isinstance(expr, ast.ScalarSubquery):
        return Subquery(expr.query)
    if (isinstance(expr, ast.Binary) and expr.op in ("+", "-") and isinstance(expr.left, ast.Column)
            and expr.left.name == column and expr.left.table in (None, table, alias)):
        return ArithmeticOnSelf(expr.left, expr.op, expr.right)
    return Expression(expr)


def skeleton_from_ast(node: ast.Update) -> UpdateSkeleton:
    return UpdateSkeleton(
        node.table,
        tuple(Assignment(col, classify_value(col, expr, node.table, node.alias))
              for col, expr in node.assignments),
        node.where, node.alias)


def _first_word(text: str) -> str:
    try:
        toks = tokenize(text)
    except Exception:
        return ""
    return toks[0].value.upper() if toks and toks[0].kind in (IDENT, QIDENT) else ""


def parse_update(sql, dialect: Dialect | str = Dialect.POSTGRESQL, *, require_where: bool = True
                 ) -> UpdateSkeleton:
    """Parse one UPDATE statement into a skeleton.

    ``sql`` is text or anything with a ``statement`` attribute.
    """
    text = getattr(sql, "statement", sql)
    statements = [s for s, _ in split_statements(text) if s.strip()]
    if len(statements) > 1:
        raise PolicyError(f"multiple statements ({len(statements)}); expected one UPDATE")
    if not statements or _first_word(statements[0]) != "UPDATE":
        raise PolicyError("non-UPDATE statement")
    node = parse_statement(statements[0], dialect)
    if not isinstance(node, ast.Update):
        raise PolicyError("non-UPDATE statement")
    skeleton = skeleton_from_ast(node)
    if require_where and skeleton.where is None:
        raise PolicyError("unbounded update: the statement has no WHERE clause")
    return skeleton


# -- subquery validation -------------------------------------------------------------

@dataclass(frozen=True)
class SubqueryPlan:
    column: str
    select: "ast.Query"
    evidence: str | None = None
    table: str | None = None  # the updated table, visible to correlated references
    alias: str | None = None


@dataclass(frozen=True)
class ValidationReport:
    accepted: bool
    column: str
    evidence: str | None = None
    reason: str = ""

    @property
    def verdict(self) -> str:
        return "ACCEPT" if self.accepted else "REJECT"


def dialect_violations(node, dialect: Dialect, *, check_limit_syntax: bool = True) -> list:
    """Constructs in ``node`` (any AST) that the dialect does not accept."""
    dialect = Dialect.parse(dialect)
    found = []
    for n in ast.walk(node):
        if isinstance(n, (ast.Select, ast.Compound)) and check_limit_syntax and n.limit_syntax:
            if n.limit_syntax != dialect.limit_form:
                word = n.limit_syntax.upper()
                found.append(f"{word} is not valid in {dialect.value}")
        elif isinstance(n, ast.Select) and n.offset is not None and dialect is Dialect.SQLSERVER:
            found.append("OFFSET without FETCH is not valid in sqlserver")
        if dialect is Dialect.POSTGRESQL:
            continue
        if isinstance(n, ast.Cast) and n.syntax == "::":
            found.append(f":: casts are not valid in {dialect.value}")
        elif isinstance(n, ast.Binary) and "ILIKE" in n.op:
            found.append(f"ILIKE is not valid in {dialect.value}")
        elif isinstance(n, ast.Function) and n.filter is not None:
            found.append(f"aggregate FILTER is not valid in {dialect.value}")
    return list(dict.fromkeys(found))


def _is_one(expr) -> bool:
    return isinstance(expr, ast.Literal) and expr.kind == "number" and expr.value == 1


def _conjuncts(expr) -> list:
    if isinstance(expr, ast.Binary) and expr.op == "AND":
        return _conjuncts(expr.left) + _conjuncts(expr.right)
    return [expr]


def _constant(expr) -> bool:
    if isinstance(expr, ast.Literal):
        return expr.kind != "null"
    if isinstance(expr, ast.Cast):
        return _constant(expr.operand)
    return False


def _projection_is_scalar_aggregate(select: ast.Select) -> bool:
    if select.group_by or len(select.items) != 1:
        return False
    expr = select.items[0].expr
    has_aggregate = False
    for n in ast.walk_shallow(expr):
        if isinstance(n, ast.Function):
            if n.over is not None:
                return False
            if ast.is_aggregate(n):
                has_aggregate = True
            elif n.name not in SCALAR_FUNCTIONS:
                return False
    return has_aggregate


def _projection_row_safe(select: ast.Select) -> bool:
    """No set-returning function in the projection."""
    for item in select.items:
        for n in ast.walk_shallow(item.expr):
            if isinstance(n, ast.Function) and not ast.is_aggregate(n) and n.name not in SCALAR_FUNCTIONS:
                return False
    return True


def cardinality_evidence(query, catalog: SchemaCatalog | None = None) -> str | None:
    """The syntactic proof that ``query`` yields at most one row, or ``None``."""
    if isinstance(query, ast.Compound):
        return LIMIT_ONE if _is_one(query.limit) else None
    if _is_one(query.limit) and _projection_row_safe(query):
        return LIMIT_ONE
    if _projection_is_scalar_aggregate(query):
        return SCALAR_AGGREGATE
    if (catalog is not None and len(query.from_) == 1 and isinstance(query.from_[0], ast.TableRef)
            and query.where is not None and _projection_row_safe(query)):
        ref = query.from_[0]
        if not catalog.has_table(ref.name):
            return None
        table = catalog.table(ref.name)
        binding = ref.alias or ref.name
        pinned = set()
        for c in _conjuncts(query.where):
            if not (isinstance(c, ast.Binary) and c.op == "="):
                continue
            for col, other in ((c.left, c.right), (c.right, c.left)):
                if (isinstance(col, ast.Column) and col.table in (None, binding)
                        and table.has_column(col.name) and _constant(other)):
                    pinned.add(col.name)
        if set(table.primary_key) <= pinned:
            return KEY_EQUALITY
    return None


class _Scope:
    def __init__(self, bindings: dict, outer: "_Scope | None" = None, aliases=()):
        self.bindings = bindings  # name -> set of columns, or None when unknown
        self.outer = outer
        self.aliases = set(aliases)


class _Resolver:
    def __init__(self, catalog: SchemaCatalog):
        self.catalog = catalog

    def table_columns(self, name: str) -> set:
        if not self.catalog.has_table(name):
            raise ValidationError(f"unknown table {name!r}")
        return set(self.catalog.table(name).column_names)

    def column(self, col: ast.Column, scope: _Scope) -> None:
        s = scope
        while s is not None:
            if col.table is not None:
                if col.table in s.bindings:
                    cols = s.bindings[col.table]
                    if cols is not None and col.name not in cols:
                        raise ValidationError(f"unknown column {col.table}.{col.name}")
                    return
            else:
                hits = [b for b, cols in s.bindings.items() if cols is None or col.name in cols]
                if len(hits) > 1 and all(s.bindings[h] is not None for h in hits):
                    raise ValidationError(f"column reference {col.name!r} is ambiguous")
                if hits:
                    return
            s = s.outer
        if col.table is not None:
            raise ValidationError(f"unknown table or alias {col.table!r}")
        raise ValidationError(f"unknown column {col.name!r}")

    def from_item(self, item, bindings: dict, outer: _Scope | None) -> None:
        if isinstance(item, ast.TableRef):
            bindings[item.alias or item.name] = self.table_columns(item.name)
        elif isinstance(item, ast.DerivedTable):
            outputs = self.query(item.query, outer)
            bindings[item.alias] = outputs
        elif isinstance(item, ast.Join):
            self.from_item(item.left, bindings, outer)
            self.from_item(item.right, bindings, outer)
            if item.on is not None:
                self.expr(item.on, _Scope(bindings, outer))

    def query(self, node, outer: _Scope | None):
        """Check every reference in ``node``; return its output column names (None if unknown)."""
        if isinstance(node, ast.Compound):
            out = self.query(node.left, outer)
            self.query(node.right, outer)
            return out
        bindings: dict = {}
        for item in node.from_:
            self.from_item(item, bindings, outer)
        aliases = [i.alias for i in node.items if i.alias]
        scope = _Scope(bindings, outer, aliases)
        for item in node.items:
            self.expr(item.expr, scope)
        for part in (node.where, node.having):
            if part is not None:
                self.expr(part, scope)
        for g in node.group_by:
            self.expr(g, scope, allow_alias=True)
        for o in node.order_by:
            self.expr(o.expr, scope, allow_alias=True)
        outputs = set()
        for item in node.items:
            if isinstance(item.expr, ast.Star):
                return None
            if item.alias:
                outputs.add(item.alias)
            elif isinstance(item.expr, ast.Column):
                outputs.add(item.expr.name)
        return outputs

    def expr(self, node, scope: _Scope, allow_alias: bool = False) -> None:
        if isinstance(node, ast.Column):
            if allow_alias and node.table is None and node.name in scope.aliases:
                return
            self.column(node, scope)
            return
        if isinstance(node, ast.Star):
            if node.table is not None and node.table not in scope.bindings:
                raise ValidationError(f"unknown table or alias {node.table!r}")
            return
        if isinstance(node, (ast.Select, ast.Compound)):
            self.query(node, scope)
            return
        for child in ast.children(node):
            self.expr(child, scope, allow_alias)


def validate_subquery(plan: SubqueryPlan, dialect: Dialect | str, catalog: SchemaCatalog
                      ) -> ValidationReport:
    """ACCEPT iff the subquery is dialect-clean and provably returns at most one row.

    Unknown tables or columns raise ``ValidationError``; everything else is a
    REJECT report carrying the reason.
    """
    dialect = Dialect.parse(dialect)
    query = plan.select
    outer = None
    if plan.table is not None:
        cols = _Resolver(catalog).table_columns(plan.table)
        names = {plan.table: cols}
        if plan.alias:
            names[plan.alias] = cols
        outer = _Scope(names)
    _Resolver(catalog).query(query, outer)

    def reject(reason: str) -> ValidationReport:
        return ValidationReport(False, plan.column, None, reason)

    problems = dialect_violations(query, dialect)
    if problems:
        return reject("; ".join(problems))
    head = query
    while isinstance(head, ast.Compound):
        head = head.left
    if len(head.items) != 1 or isinstance(head.items[0].expr, ast.Star):
        return reject("subquery must project exactly one expression")
    evidence = cardinality_evidence(query, catalog)
    if evidence is None:
        return reject("cardinality unproven: no LIMIT/TOP 1, scalar aggregate, or full-key equality")
    return ValidationReport(True, plan.column, evidence, "")


def subquery_plans(skeleton: UpdateSkeleton) -> list:
    """A plan for every scalar subquery appearing in a SET value, outermost first."""
    plans = []
    for a in skeleton.assignments:
        if isinstance(a.value, (ast.Literal, ast.Placeholder)):
            continue
        for n in ast.walk(value_expr(a.value)):
            if isinstance(n, ast.ScalarSubquery):
                plans.append(SubqueryPlan(a.column, n.query, None, skeleton.table, skeleton.alias))
    return plans


# -- classification ------------------------------------------------------------------

@dataclass(frozen=True)
class UpdateTargetSet:
    direct: tuple = ()
    cascade: tuple = ()
    derived: tuple = ()

    def __post_init__(self):
        d, c, v = set(self.direct), set(self.cascade), set(self.derived)
        if d & c or d & v or c & v:
            raise ValueError("update target groups must be pairwise disjoint")

    def group_of(self, column: str) -> str | None:
        for name in ("direct", "cascade", "derived"):
            if column in getattr(self, name):
                return name
        return None

    def as_dict(self) -> dict:
        return {"direct": list(self.direct), "cascade": list(self.cascade),
                "derived": list(self.derived)}


def _norm(value) -> str:
    if isinstance(value, Decimal):
        value = value.normalize()
        return format(value, "f")
    return str(value).strip().casefold()


def literal_traceable(literal: ast.Literal, facts) -> bool:
    if literal.kind == "null":
        return False
    wanted = _norm(literal.value)
    for v in facts:
        if v is None:
            continue
        if literal.kind == "number":
            try:
                if Decimal(str(v).strip()) == literal.value:
                    return True
            except Exception:
                pass
        if _norm(v) == wanted:
            return True
    return False


def mentioned_columns(text: str, table, directive_columns=()) -> tuple:
    """Columns named in ``text`` (as written or with spaces for underscores) plus directives."""
    low = text.casefold()
    found = [c for c in table.column_names if c.casefold() in low or c.replace("_", " ").casefold() in low]
    return tuple(dict.fromkeys(found + [c for c in directive_columns if table.has_column(c)]))


def classify_assignments(skeleton: UpdateSkeleton, instruction, catalog: SchemaCatalog,
                         mention_map=()) -> UpdateTargetSet:
    """Partition SET columns into direct, cascade and derived groups.

    Derived: the column carries an aggregation rule. Direct: the value is a
    literal and the column is mentioned or the literal equals an instruction
    fact. Everything else is cascade.
    """
    table = catalog.table(skeleton.table)
    facts = [v for _, v in getattr(instruction, "facts", ())]
    mentioned = set(mention_map)
    direct, cascade, derived = [], [], []
    for a in skeleton.assignments:
        col = table.column(a.column) if table.has_column(a.column) else None
        if col is not None and col.role == DERIVED:
            derived.append(a.column)
        elif isinstance(a.value, ast.Literal) and (a.column in mentioned or literal_traceable(a.value, facts)):
            direct.append(a.column)
        else:
            cascade.append(a.column)
    return UpdateTargetSet(tuple(direct), tuple(cascade), tuple(derived))


# -- composition ---------------------------------------------------------------------

@dataclass(frozen=True)
class ComposedUpdate:
    skeleton: UpdateSkeleton
    dialect: Dialect
    sql_text: str


def compose_update(skeleton: UpdateSkeleton, resolved: dict | None = None,
                   dialect: Dialect | str = Dialect.POSTGRESQL,
                   catalog: SchemaCatalog | None = None) -> ComposedUpdate:
    """Fill placeholders and render one canonical UPDATE for ``dialect``.

    ``resolved`` maps placeholder columns to a ``Literal`` or an accepted
    ``SubqueryPlan``. Every subquery of the final statement must carry
    cardinality evidence; key-equality evidence needs ``catalog``.
    """
    dialect = Dialect.parse(dialect)
    resolved = dict(resolved or {})
    holes = set(skeleton.placeholders())
    for col in resolved:
        if col not in holes:
            raise CompositionError(f"no placeholder for column {col!r}", stage="L")
    assignments = []
    for a in skeleton.assignments:
        value = a.value
        if isinstance(value, ast.Placeholder):
            if a.column not in resolved:
                raise CompositionError(f"unresolved placeholder for column {a.column!r}", stage="L")
            r = resolved[a.column]
            if isinstance(r, SubqueryPlan):
                if r.evidence is None:
                    raise CompositionError(f"subquery for {a.column!r} was not validated", stage="L")
                value = Subquery(r.select)
            elif isinstance(r, ast.Literal):
                value = r
            else:
                raise CompositionError(f"unsupported resolution for {a.column!r}", stage="L")
        assignments.append(Assignment(a.column, value))
    final = UpdateSkeleton(skeleton.table, tuple(assignments), skeleton.where, skeleton.alias)
    if final.where is None:
        raise PolicyError("unbounded update: the statement has no WHERE clause", stage="L")
    for plan in subquery_plans(final):
        if cardinality_evidence(plan.select, catalog) is None:
            raise CompositionError(f"subquery for {plan.column!r} lacks cardinality evidence", stage="L")
    problems = dialect_violations(final.to_ast(), dialect, check_limit_syntax=False)
    if problems:
        raise CompositionError("; ".join(problems), stage="L")
    text = render_update(final.to_ast(), dialect)
    if parse_update(text, dialect) != final:
        raise CompositionError("composed statement does not reparse to the same skeleton", stage="L")
    return ComposedUpdate(final, dialect, text)
