"""Tokenizer shared by the DDL, DML and trigger parsers."""

from __future__ import annotations

from dataclasses import dataclass

from castle.errors import SqlSyntaxError

IDENT = "ident"  # unquoted word (keywords included)
QIDENT = "qident"  # quoted identifier, value verbatim
STRING = "string"
NUMBER = "number"
OP = "op"
PARAM = "param"
DOLLAR = "dollar"  # dollar-quoted body
EOF = "eof"

_OPERATORS = ("<>", "!=", "<=", ">=", "||", "::", "=", "<", ">", "+", "-", "*", "/", "%",
              "(", ")", ",", ";", ".")


@dataclass(frozen=True)
class Token:
    kind: str
    value: str
    pos: int
    line: int
    col: int
    end: int

    @property
    def upper(self) -> str:
        return self.value.upper() if self.kind == IDENT else ""

    def is_kw(self, *words: str) -> bool:
        return self.kind == IDENT and self.value.upper() in words

    def is_op(self, *ops: str) -> bool:
        return self.kind == OP and self.value in ops


def _line_col(text: str, pos: int) -> tuple[int, int]:
    line = text.count("\n", 0, pos) + 1
    col = pos - (text.rfind("\n", 0, pos) + 1) + 1
    return line, col


def tokenize(text: str, *, brackets: bool = False) -> list[Token]:
    """Split SQL text into tokens, dropping whitespace and comments.

    ``brackets`` enables ``[identifier]`` quoting (SQL Server).
    """
    tokens: list[Token] = []
    i, n = 0, len(text)

    def emit(kind: str, value: str, start: int, end: int) -> None:
        line, col = _line_col(text, start)
        tokens.append(Token(kind, value, start, line, col, end))

    def fail(msg: str, at: int) -> None:
        line, col = _line_col(text, at)
        raise SqlSyntaxError(msg, line=line, col=col, token=text[at:at + 10])

    while i < n:
        ch = text[i]
        if ch.isspace():
            i += 1
        elif text.startswith("--", i):
            j = text.find("\n", i)
            i = n if j < 0 else j + 1
        elif text.startswith("/*", i):
            j = text.find("*/", i + 2)
            if j < 0:
                fail("unterminated block comment", i)
            i = j + 2
        elif ch == "'":
            j, buf = i + 1, []
            while True:
                if j >= n:
                    fail("unterminated string literal", i)
                if text[j] == "'":
                    if j + 1 < n and text[j + 1] == "'":
                        buf.append("'")
                        j += 2
                        continue
                    break
                buf.append(text[j])
                j += 1
            emit(STRING, "".join(buf), i, j + 1)
            i = j + 1
        elif ch in '"`' or (brackets and ch == "["):
            close = {'"': '"', "`": "`", "[": "]"}[ch]
            j, buf = i + 1, []
            while True:
                if j >= n:
                    fail("unterminated quoted identifier", i)
                if text[j] == close:
                    if j + 1 < n and text[j + 1] == close and close != "]":
                        buf.append(close)
                        j += 2
                        continue
                    break
                buf.append(text[j])
                j += 1
            if not buf:
                fail("empty quoted identifier", i)
            emit(QIDENT, "".join(buf), i, j + 1)
            i = j + 1
        elif ch == "$":
            j = i + 1
            while j < n and (text[j].isalnum() or text[j] == "_"):
                j += 1
            if j < n and text[j] == "$":
                tag = text[i:j + 1]
                k = text.find(tag, j + 1)
                if k < 0:
                    fail("unterminated dollar-quoted string", i)
                emit(DOLLAR, text[j + 1:k], i, k + len(tag))
                i = k + len(tag)
            else:
                fail("unexpected character '$'", i)
        elif ch.isdigit() or (ch == "." and i + 1 < n and text[i + 1].isdigit()):
            j = i
            while j < n and text[j].isdigit():
                j += 1
            if j < n and text[j] == "." and not text.startswith("..", j):
                j += 1
                while j < n and text[j].isdigit():
                    j += 1
            if j < n and text[j] in "eE" and j + 1 < n and (
                    text[j + 1].isdigit() or (text[j + 1] in "+-" and j + 2 < n and text[j + 2].isdigit())):
                j += 2
                while j < n and text[j].isdigit():
                    j += 1
            emit(NUMBER, text[i:j], i, j)
            i = j
        elif ch.isalpha() or ch == "_":
            j = i + 1
            while j < n and (text[j].isalnum() or text[j] in "_$"):
                j += 1
            emit(IDENT, text[i:j], i, j)
            i = j
        elif ch == "?":
            emit(PARAM, "?", i, i + 1)
            i += 1
        else:
            for op in _OPERATORS:
                if text.startswith(op, i):
                    emit(OP, op, i, i + len(op))
                    i += len(op)
                    break
            else:
                fail(f"unexpected character {ch!r}", i)
    line, col = _line_col(text, n)
    tokens.append(Token(EOF, "", n, line, col, n))
    return tokens


def split_statements(text: str) -> list[tuple[str, int]]:
    """Split a script on top-level semicolons.

    Returns ``(statement_text, start_offset)`` pairs with empty statements
    dropped. Semicolons inside strings, quoted identifiers, comments and
    dollar-quoted bodies do not split.
    """
    tokens = tokenize(text)
    out: list[tuple[str, int]] = []
    start: int | None = None
    for tok in tokens:
        if tok.kind == EOF or tok.is_op(";"):
            if start is not None:
                out.append((text[start:tok.pos].strip(), start))
            start = None
        elif start is None:
            start = tok.pos
    return out
