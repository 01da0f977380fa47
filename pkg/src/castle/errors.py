"""Exception hierarchy.

Every error carries an ``exit_code`` used by the command line
(2 configuration/input, 3 validation rejection, 4 runtime/database) and an
optional pipeline ``stage`` label (C, A, S, T, L, E or ``gateway``).
"""

from __future__ import annotations


class CastleError(Exception):
    exit_code = 4

    def __init__(self, message: str, *, stage: str | None = None):
        super().__init__(message)
        self.message = message
        self.stage = stage

    def __str__(self) -> str:
        if self.stage:
            return f"[stage {self.stage}] {self.message}"
        return self.message


class ConfigError(CastleError):
    exit_code = 2


class SqlSyntaxError(CastleError):
    """Parse failure with 1-based line/column of the offending token."""

    exit_code = 3

    def __init__(self, message: str, *, line: int = 0, col: int = 0, token: str = "",
                 stage: str | None = None):
        where = f" at line {line}, column {col}" if line else ""
        near = f" near {token!r}" if token else ""
        super().__init__(f"{message}{where}{near}", stage=stage)
        self.line = line
        self.col = col
        self.token = token


class SchemaError(CastleError):
    exit_code = 2


class PolicyError(CastleError):
    """Statement is well-formed but not allowed (e.g. an unbounded update)."""

    exit_code = 3


class ValidationError(CastleError):
    """A subquery or script failed validation against the catalog."""

    exit_code = 3


class CompositionError(CastleError):
    exit_code = 3


class PromptError(CastleError):
    exit_code = 2


class GatewayError(CastleError):
    exit_code = 4

    def __init__(self, message: str, *, diagnostics: dict | None = None, stage: str | None = "gateway"):
        super().__init__(message, stage=stage)
        self.diagnostics = diagnostics or {}


class GatewayConfigError(GatewayError):
    exit_code = 2


class AuthenticationError(GatewayError):
    exit_code = 2


class TransportError(GatewayError):
    pass


class GatewayTimeout(GatewayError):
    pass


class MissingFixtureError(GatewayError):
    exit_code = 2


class ExtractionError(CastleError):
    exit_code = 3

    def __init__(self, message: str, raw_text: str, *, stage: str | None = "C"):
        super().__init__(message, stage=stage)
        self.raw_text = raw_text


class TriggerGenerationError(CastleError):
    exit_code = 4

    def __init__(self, message: str, last_response: str = "", *, stage: str | None = "T"):
        super().__init__(message, stage=stage)
        self.last_response = last_response


class DatabaseError(CastleError):
    exit_code = 4

    def __init__(self, message: str, *, sqlstate: str | None = None, stage: str | None = None):
        super().__init__(f"{message} (SQLSTATE {sqlstate})" if sqlstate else message, stage=stage)
        self.sqlstate = sqlstate


class DatasetError(CastleError):
    exit_code = 2


class MetricError(CastleError):
    exit_code = 4
