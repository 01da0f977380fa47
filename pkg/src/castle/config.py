"""Run configuration: an INI file overlaid by command-line flags (flags win).

File layout::

    [castle]
    dsn = host=/tmp/sock dbname=postgres
    provider = scripted
    fixture_dir = fixtures/
    model = gpt-4o
    method = castle
    parallel = 4
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass, fields, replace
from pathlib import Path

from castle.db import ConnectionConfig
from castle.dialects import Dialect
from castle.errors import ConfigError
from castle.pipeline import METHODS

SECTION = "castle"


@dataclass(frozen=True)
class RunConfig:
    dsn: str | None = None
    dialect: str = "postgresql"
    statement_timeout: float = 30.0
    provider: str = "scripted"
    fixture_dir: str | None = None
    endpoint: str | None = None
    retries: int = 2
    audit_log: str | None = None
    model: str = "scripted"
    method: str = "castle"
    temperature: float = 0.0
    parallel: int = 1
    seed: int = 0
    sample: int | None = None
    out: str = "out"
    dry_run: bool = False
    dataset_dir: str | None = None
    schema: str | None = None
    annotations: str | None = None
    template_dir: str | None = None
    content_path: str | None = None  # sample rows shown to content-augmented methods

    def __post_init__(self):
        if self.method not in METHODS:
            raise ConfigError(f"unknown method {self.method!r}; expected one of {', '.join(METHODS)}")
        if self.method == "castle" and self.content_path:
            raise ConfigError("method castle is schema-only; a table-content path is not allowed")
        if self.parallel < 1:
            raise ConfigError("parallel must be a positive integer")
        if self.sample is not None and self.sample < 1:
            raise ConfigError("sample must be a positive integer")
        Dialect.parse(self.dialect)

    @property
    def connection(self) -> ConnectionConfig:
        if not self.dsn:
            raise ConfigError("no database connection configured (--dsn or dsn = in the config file)")
        return ConnectionConfig(self.dsn, Dialect.parse(self.dialect), self.statement_timeout)


_TYPES = {f.name: f.type for f in fields(RunConfig)}


def _coerce(name: str, value):
    if value is None:
        return None
    kind = _TYPES[name]
    try:
        if "bool" in kind:
            if isinstance(value, bool):
                return value
            low = str(value).strip().lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(value)
        if "int" in kind:
            return int(value)
        if "float" in kind:
            return float(value)
    except ValueError:
        raise ConfigError(f"bad value for {name}: {value!r}") from None
    return str(value)


def read_config_file(path) -> dict:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    parser = configparser.ConfigParser()
    try:
        parser.read(path, encoding="utf-8")
    except configparser.Error as exc:
        raise ConfigError(f"cannot parse config file {path}: {exc}") from None
    if not parser.has_section(SECTION):
        raise ConfigError(f"config file {path} has no [{SECTION}] section")
    out = {}
    for key, value in parser.items(SECTION):
        name = key.replace("-", "_")
        if name not in _TYPES:
            raise ConfigError(f"unknown config key {key!r} in {path}")
        out[name] = _coerce(name, value)
    return out


def resolve_config(path=None, overrides: dict | None = None) -> RunConfig:
    """File values first, then every flag that was actually given."""
    values = read_config_file(path) if path else {}
    for key, value in (overrides or {}).items():
        if value is not None and key in _TYPES:
            values[key] = _coerce(key, value)
    return replace(RunConfig(), **values) if values else RunConfig()
