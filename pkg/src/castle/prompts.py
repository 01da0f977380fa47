"""Prompt templates and instruction rendering.

Templates are plain text assets with ``{slot}`` markers; building a prompt is
slot substitution and nothing else.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

from castle.errors import PromptError

TEMPLATE_IDS = ("castle", "baseline", "multisql", "trigger_gen")
SCHEMA_ONLY = frozenset({"castle", "baseline", "trigger_gen"})
DATASETS = ("soccer", "retail")

INSTRUCTION_SLOTS = {
    "soccer": ("first_name", "last_name", "player_code", "from_club_code", "dest_club_code"),
    "retail": ("StockCode", "Quantity", "InvoiceDate", "UnitPrice", "Country"),
}

_SLOT = re.compile(r"\{([A-Za-z_][A-Za-z0-9_]*)\}")


@dataclass(frozen=True)
class PromptTemplate:
    template_id: str
    body: str

    @property
    def slots(self) -> tuple:
        return tuple(dict.fromkeys(_SLOT.findall(self.body)))

    def __post_init__(self):
        if self.template_id in ("castle", "baseline") and "table_sample_content" in self.slots:
            raise PromptError(f"template {self.template_id!r} must not take table content")


@dataclass(frozen=True)
class Instruction:
    text: str
    case_id: str
    dataset: str
    facts: tuple = ()  # ((slot, value), ...) the text was rendered from

    def __post_init__(self):
        if not self.text.strip():
            raise PromptError("instruction text is empty")


def _read_asset(name: str, directory: str | Path | None) -> str:
    if directory is not None:
        path = Path(directory) / name
        if path.exists():
            return path.read_text(encoding="utf-8")
    return resources.files("castle.templates").joinpath(name).read_text(encoding="utf-8")


def load_template(template_id: str, directory: str | Path | None = None) -> PromptTemplate:
    """Load a built-in template, preferring an override file in ``directory``."""
    if template_id not in TEMPLATE_IDS:
        raise PromptError(f"unknown template {template_id!r}")
    return PromptTemplate(template_id, _read_asset(f"{template_id}.txt", directory))


def fill(body: str, values: dict) -> str:
    """Substitute every ``{slot}`` in one pass; a slot without a value is an error."""
    missing = [s for s in dict.fromkeys(_SLOT.findall(body)) if s not in values]
    if missing:
        raise PromptError(f"missing value for slot {missing[0]!r}")
    return _SLOT.sub(lambda m: str(values[m.group(1)]), body)


def render_instruction(dataset: str, facts: dict, case_id: str = "adhoc",
                       template_dir: str | Path | None = None) -> Instruction:
    if dataset not in DATASETS:
        raise PromptError(f"unknown dataset {dataset!r}")
    for slot in INSTRUCTION_SLOTS[dataset]:
        if facts.get(slot) in (None, ""):
            raise PromptError(f"instruction fact {slot!r} is missing")
    body = _read_asset(f"instruction_{dataset}.txt", template_dir).rstrip("\n")
    used = tuple((slot, str(facts[slot])) for slot in INSTRUCTION_SLOTS[dataset])
    return Instruction(fill(body, facts), case_id, dataset, used)


def build_prompt(template: PromptTemplate, schema_text: str, instruction: Instruction | str,
                 sample_rows: str | None = None) -> str:
    text = instruction.text if isinstance(instruction, Instruction) else instruction
    wants_sample = "table_sample_content" in template.slots
    if sample_rows is not None and not wants_sample:
        raise PromptError(f"template {template.template_id!r} is schema-only; sample rows refused")
    if wants_sample and sample_rows is None:
        raise PromptError("missing value for slot 'table_sample_content'")
    values = {"schema": schema_text, "instruction": text}
    if wants_sample:
        values["table_sample_content"] = sample_rows
    return fill(template.body, values)


def build_trigger_prompt(schema_text: str, table: str, derived_columns, rules, *,
                         dialect: str = "postgresql", template: PromptTemplate | None = None) -> str:
    """Prompt asking for one function and one trigger maintaining ``derived_columns``.

    ``rules`` are the ``AggregationRule`` annotations of those columns.
    """
    columns = list(derived_columns)
    if not columns:
        raise PromptError("no derived columns to maintain")
    by_column = {r.column: r for r in rules}
    lines = []
    sources = []
    for col in columns:
        rule = by_column.get(col)
        if rule is None:
            raise PromptError(f"no aggregation rule for derived column {col!r}")
        lines.append(f"- {table}.{rule.text()}")
        sources.append(rule.source_table)
    template = template or load_template("trigger_gen")
    return fill(template.body, {
        "schema": schema_text,
        "dialect": str(dialect),
        "table": table,
        "rules": "\n".join(lines),
        "columns": ", ".join(columns),
        "source_table": ", ".join(dict.fromkeys(sources)),
    })


def _cell(value) -> str:
    return "NULL" if value is None else str(value)


def render_sample_rows(columns, rows, limit: int = 3) -> str:
    """Aligned text table of the first ``limit`` rows (header, rule, rows)."""
    shown = [[_cell(r[c] if isinstance(r, dict) else r[i]) for i, c in enumerate(columns)]
             for r in list(rows)[:limit]]
    widths = [max([len(c)] + [len(row[i]) for row in shown]) for i, c in enumerate(columns)]
    lines = [" | ".join(c.ljust(w) for c, w in zip(columns, widths)).rstrip(),
             "-+-".join("-" * w for w in widths)]
    lines += [" | ".join(v.ljust(w) for v, w in zip(row, widths)).rstrip() for row in shown]
    return "\n".join(lines)


def row_text(row: dict, columns=None) -> str:
    columns = columns or list(row)
    return " | ".join(_cell(row[c]) for c in columns)


def find_leaks(prompt: str, row_texts, *, exclude=(), threshold: int = 12) -> list:
    """Substrings of length ``threshold`` shared by ``prompt`` and any row text.

    Text in ``exclude`` (the instruction, which the user supplies) is cut out of
    the prompt first so windows never span it.
    """
    for chunk in exclude:
        if chunk:
            prompt = prompt.replace(chunk, "\x00")
    windows = {prompt[i:i + threshold] for i in range(len(prompt) - threshold + 1)}
    windows = {w for w in windows if "\x00" not in w}
    leaks = []
    for text in row_texts:
        for i in range(len(text) - threshold + 1):
            w = text[i:i + threshold]
            if w in windows:
                leaks.append(w)
                break
    return sorted(set(leaks))
