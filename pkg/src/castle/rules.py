"""In-memory evaluation of aggregation rules with SQL NULL semantics.

This is the brute-force recomputation used to build ground truth and to check
deployed triggers; it never touches a database.
"""

from __future__ import annotations

from decimal import Decimal, localcontext

from castle.errors import SchemaError
from castle.schema import AggregationRule, SchemaCatalog
from castle.sql import ast
from castle.values import canonical_value


class EvaluationError(SchemaError):
    pass


def _num(v):
    if isinstance(v, bool):
        raise EvaluationError("boolean used in arithmetic")
    if isinstance(v, (int, Decimal)):
        return v
    if isinstance(v, str):
        try:
            return Decimal(v)
        except Exception:
            raise EvaluationError(f"non-numeric value {v!r} in arithmetic") from None
    raise EvaluationError(f"unsupported value {v!r}")


def _arith(op: str, a, b):
    if a is None or b is None:
        return None
    a, b = _num(a), _num(b)
    with localcontext() as ctx:
        ctx.prec = 50
        if op == "+":
            return a + b
        if op == "-":
            return a - b
        if op == "*":
            return a * b
        if b == 0:
            raise EvaluationError("division by zero")
        if op == "/":
            if isinstance(a, int) and isinstance(b, int):
                q = abs(a) // abs(b)
                return q if (a >= 0) == (b >= 0) else -q
            return Decimal(a) / Decimal(b)
        if op == "%":
            if isinstance(a, int) and isinstance(b, int):
                r = abs(a) % abs(b)
                return r if a >= 0 else -r
            return Decimal(a) % Decimal(b)
    raise EvaluationError(f"unsupported operator {op}")


def _compare(op: str, a, b):
    if a is None or b is None:
        return None
    if isinstance(a, str) != isinstance(b, str):
        try:
            a, b = _num(a), _num(b)
        except EvaluationError:
            a, b = str(a), str(b)
    return {"=": a == b, "<>": a != b, "<": a < b, ">": a > b, "<=": a <= b, ">=": a >= b}[op]


def _and(a, b):
    if a is False or b is False:
        return False
    if a is None or b is None:
        return None
    return True


def _or(a, b):
    if a is True or b is True:
        return True
    if a is None or b is None:
        return None
    return False


def _like(value: str, pattern: str, ci: bool) -> bool:
    import re
    rx = "".join(".*" if ch == "%" else "." if ch == "_" else re.escape(ch) for ch in pattern)
    return re.fullmatch(rx, value, re.S | (re.I if ci else 0)) is not None


def eval_row(expr, row: dict, group: list | None = None):
    """Evaluate ``expr`` for one row; aggregates evaluate over ``group``."""
    if isinstance(expr, ast.Literal):
        return expr.value
    if isinstance(expr, ast.Column):
        if expr.name not in row:
            raise EvaluationError(f"unknown column {expr.name!r}")
        return row[expr.name]
    if ast.is_aggregate(expr):
        if group is None:
            raise EvaluationError(f"aggregate {expr.name}() outside aggregate context")
        return eval_aggregate(expr, group)
    if isinstance(expr, ast.Binary):
        if expr.op == "AND":
            return _and(eval_row(expr.left, row, group), eval_row(expr.right, row, group))
        if expr.op == "OR":
            return _or(eval_row(expr.left, row, group), eval_row(expr.right, row, group))
        a, b = eval_row(expr.left, row, group), eval_row(expr.right, row, group)
        if expr.op in ("+", "-", "*", "/", "%"):
            return _arith(expr.op, a, b)
        if expr.op == "||":
            return None if a is None or b is None else f"{a}{b}"
        if expr.op.endswith("LIKE"):
            if a is None or b is None:
                return None
            hit = _like(str(a), str(b), ci="ILIKE" in expr.op)
            return not hit if expr.op.startswith("NOT") else hit
        return _compare(expr.op, a, b)
    if isinstance(expr, ast.Unary):
        v = eval_row(expr.operand, row, group)
        if expr.op == "NOT":
            return None if v is None else not v
        if v is None:
            return None
        return -_num(v) if expr.op == "-" else _num(v)
    if isinstance(expr, ast.IsNull):
        v = eval_row(expr.operand, row, group)
        return (v is not None) if expr.negated else (v is None)
    if isinstance(expr, ast.IsDistinct):
        a, b = eval_row(expr.left, row, group), eval_row(expr.right, row, group)
        same = (a is None and b is None) or (a is not None and b is not None and _compare("=", a, b))
        return same if expr.negated else not same
    if isinstance(expr, ast.Between):
        v = eval_row(expr.operand, row, group)
        res = _and(_compare(">=", v, eval_row(expr.low, row, group)),
                   _compare("<=", v, eval_row(expr.high, row, group)))
        return (None if res is None else not res) if expr.negated else res
    if isinstance(expr, ast.InList):
        v = eval_row(expr.operand, row, group)
        res = False
        for item in expr.items:
            res = _or(res, _compare("=", v, eval_row(item, row, group)))
        return (None if res is None else not res) if expr.negated else res
    if isinstance(expr, ast.Case):
        if expr.operand is not None:
            subject = eval_row(expr.operand, row, group)
            for cond, result in expr.whens:
                if _compare("=", subject, eval_row(cond, row, group)):
                    return eval_row(result, row, group)
        else:
            for cond, result in expr.whens:
                if eval_row(cond, row, group) is True:
                    return eval_row(result, row, group)
        return None if expr.default is None else eval_row(expr.default, row, group)
    if isinstance(expr, ast.Cast):
        v = eval_row(expr.operand, row, group)
        if v is None:
            return None
        t = expr.type_name.split("(")[0]
        if t in ("INTEGER", "INT", "BIGINT", "SMALLINT"):
            return int(_num(v).to_integral_value()) if isinstance(_num(v), Decimal) else int(v)
        if t in ("NUMERIC", "DECIMAL", "FLOAT", "REAL", "DOUBLE PRECISION"):
            return Decimal(_num(v))
        return str(v)
    if isinstance(expr, ast.Function):
        args = [eval_row(a, row, group) for a in expr.args]
        return _scalar_function(expr.name, args)
    raise EvaluationError(f"unsupported expression {type(expr).__name__} in rule")


def _scalar_function(name: str, args: list):
    if name == "coalesce":
        return next((a for a in args if a is not None), None)
    if name == "nullif":
        return None if _compare("=", args[0], args[1]) else args[0]
    if any(a is None for a in args):
        return None
    if name == "abs":
        return abs(_num(args[0]))
    if name == "round":
        places = int(args[1]) if len(args) > 1 else 0
        from decimal import ROUND_HALF_UP
        return Decimal(_num(args[0])).quantize(Decimal(1).scaleb(-places), rounding=ROUND_HALF_UP)
    if name in ("greatest", "least"):
        vals = [_num(a) for a in args]
        return max(vals) if name == "greatest" else min(vals)
    if name in ("lower", "upper"):
        return str(args[0]).lower() if name == "lower" else str(args[0]).upper()
    raise EvaluationError(f"unsupported function {name}() in rule")


def eval_aggregate(fn: ast.Function, rows: list):
    if fn.filter is not None:
        rows = [r for r in rows if eval_row(fn.filter, r) is True]
    if fn.star:
        if fn.name != "count":
            raise EvaluationError(f"{fn.name}(*) is not valid")
        return len(rows)
    if len(fn.args) != 1:
        raise EvaluationError(f"{fn.name}() takes one argument in rules")
    values = [eval_row(fn.args[0], r) for r in rows]
    values = [v for v in values if v is not None]
    if fn.distinct:
        values = list(dict.fromkeys(values))
    if fn.name == "count":
        return len(values)
    if not values:
        return None
    if fn.name in ("min", "max"):
        return min(values) if fn.name == "min" else max(values)
    nums = [_num(v) for v in values]
    with localcontext() as ctx:
        ctx.prec = 50
        total = sum(nums, Decimal(0)) if any(isinstance(n, Decimal) for n in nums) else sum(nums)
        if fn.name == "sum":
            return total
        if fn.name == "avg":
            return Decimal(total) / Decimal(len(nums))
    raise EvaluationError(f"unsupported aggregate {fn.name}() in rule")


def group_key(row: dict, keys: tuple):
    key = tuple(row.get(k) for k in keys)
    return None if any(v is None for v in key) else key


def recompute_rule(rule: AggregationRule, source_rows: list) -> dict:
    """Map each group key present in ``source_rows`` to the rule's value."""
    groups: dict = {}
    for r in source_rows:
        k = group_key(r, rule.group_by)
        if k is not None:
            groups.setdefault(k, []).append(r)
    return {k: eval_row(rule.expr, rows[0], rows) for k, rows in groups.items()}


def value_for_group(rule: AggregationRule, rows: list):
    """Rule value for one group; an empty group behaves like an empty correlated subquery."""
    return eval_row(rule.expr, rows[0] if rows else {}, rows)


def recompute_table(catalog: SchemaCatalog, table: str, rows_by_table: dict) -> list:
    """Return copies of ``rows_by_table[table]`` with every derived column recomputed.

    Values are canonical strings (or ``None``) at the column's declared scale;
    rows whose group key contains NULL keep their stored value.
    """
    schema = catalog.table(table)
    target_rows = rows_by_table[table]
    out = [dict(r) for r in target_rows]
    for rule in catalog.rules_for(table):
        source = rows_by_table[rule.source_table]
        groups: dict = {}
        for r in source:
            k = group_key(r, rule.group_by)
            if k is not None:
                groups.setdefault(k, []).append(r)
        column = schema.column(rule.column)
        for row in out:
            k = group_key(row, rule.group_by)
            if k is None:
                continue
            rows = groups.get(k, [])
            row[rule.column] = canonical_value(eval_row(rule.expr, rows[0] if rows else {}, rows), column)
    return out
