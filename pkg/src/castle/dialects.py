"""Supported SQL dialects and their row-limit clause forms."""

from __future__ import annotations

import enum

from castle.errors import ConfigError


class Dialect(str, enum.Enum):
    POSTGRESQL = "postgresql"
    MYSQL = "mysql"
    SQLSERVER = "sqlserver"

    @property
    def limit_form(self) -> str:
        """Each dialect has exactly one scalar-limit clause: ``limit`` or ``top``."""
        return "top" if self is Dialect.SQLSERVER else "limit"

    @classmethod
    def parse(cls, name: "str | Dialect") -> "Dialect":
        if isinstance(name, Dialect):
            return name
        aliases = {"postgres": "postgresql", "pg": "postgresql", "mssql": "sqlserver",
                   "tsql": "sqlserver"}
        key = aliases.get(name.strip().lower(), name.strip().lower())
        try:
            return cls(key)
        except ValueError:
            raise ConfigError(f"unknown dialect {name!r}; expected one of "
                              f"{', '.join(d.value for d in cls)}") from None


DialectId = Dialect
