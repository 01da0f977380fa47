"""Retail quarterly summary and return cases from raw transactions."""

from __future__ import annotations

import logging
import re
from dataclasses import dataclass
from datetime import date, datetime

from castle.cells import Cell, CellDelta, UpdateCase
from castle.datasets.catalogs import RETAIL_SOURCE, RETAIL_TABLE, asset_text, bundled_catalog
from castle.datasets.tabular import read_csv, state_ref
from castle.errors import DatasetError
from castle.rules import recompute_table
from castle.schema import SchemaCatalog
from castle.values import canonical_value, typed_value

log = logging.getLogger(__name__)

FIRST_QUARTER = (2010, 4)
LAST_QUARTER = (2011, 4)

# Accepted spellings of each transaction attribute (both UCI releases).
_ALIASES = {
    "invoice": ("Invoice", "InvoiceNo"),
    "stockcode": ("StockCode",),
    "description": ("Description",),
    "quantity": ("Quantity",),
    "invoicedate": ("InvoiceDate",),
    "price": ("Price", "UnitPrice"),
    "customer_id": ("Customer ID", "CustomerID"),
    "country": ("Country",),
}
_REQUIRED = ("invoice", "stockcode", "quantity", "invoicedate", "price", "country")
_DATE_FORMATS = ("%Y-%m-%d %H:%M:%S", "%Y-%m-%d %H:%M", "%Y-%m-%d", "%m/%d/%Y %H:%M", "%m/%d/%Y")


def parse_date(text: str) -> datetime:
    text = (text or "").strip()
    for fmt in _DATE_FORMATS:
        try:
            return datetime.strptime(text, fmt)
        except ValueError:
            continue
    raise DatasetError(f"invalid date {text!r}")


def derive_quarter(value) -> str:
    """``yYYYYqN`` for a date (or date text), N = ceil(month / 3)."""
    d = value if isinstance(value, (date, datetime)) else parse_date(value)
    return f"y{d.year}q{(d.month - 1) // 3 + 1}"


def quarter_columns() -> list:
    out, (y, q) = [], FIRST_QUARTER
    while (y, q) <= LAST_QUARTER:
        out.append(f"y{y}q{q}_quantity")
        y, q = (y + 1, 1) if q == 4 else (y, q + 1)
    return out


def _in_range(label: str) -> bool:
    m = re.fullmatch(r"y(\d{4})q([1-4])", label)
    return m is not None and FIRST_QUARTER <= (int(m.group(1)), int(m.group(2))) <= LAST_QUARTER


def load_region_map(source=None) -> dict:
    """Country -> region from a two-column CSV (bundled asset by default)."""
    header, rows = read_csv(source if source is not None else asset_text("region_map.csv"))
    if len(header) != 2:
        raise DatasetError("region map must have exactly two columns")
    key, val = header
    return {r[key].strip(): r[val].strip() for r in rows if r[key].strip()}


def map_region(country: str, mapping: dict) -> str:
    name = (country or "").strip()
    if name not in mapping:
        raise DatasetError(f"unmapped country {name!r}")
    return mapping[name]


@dataclass(frozen=True)
class RetailBuild:
    summary_rows: list       # online_retail_quarterly_summary, canonical text
    transaction_rows: list   # online_retail seed (sales only), canonical text
    cases: list
    invalid: int             # returns without a summary row
    ignored: int             # zero-quantity lines


def _normalize(header, raw_rows) -> list:
    columns = {}
    for name, aliases in _ALIASES.items():
        found = next((a for a in aliases if a in header), None)
        if found is None and name in _REQUIRED:
            raise DatasetError(f"transactions lack a {' / '.join(aliases)} column")
        columns[name] = found
    out = []
    for n, raw in enumerate(raw_rows, start=2):
        row = {k: (raw[src].strip() if src and raw[src] is not None else None) for k, src in columns.items()}
        row = {k: (None if v == "" else v) for k, v in row.items()}
        try:
            row["quantity"] = int(row["quantity"])
        except (TypeError, ValueError):
            raise DatasetError(f"transactions line {n}: bad quantity {row['quantity']!r}") from None
        stamp = parse_date(row["invoicedate"])
        quarter = derive_quarter(stamp)
        if not _in_range(quarter):
            raise DatasetError(f"transactions line {n}: date {row['invoicedate']} outside "
                               f"2010Q4-2011Q4")
        row["raw_date"] = row["invoicedate"]
        row["invoicedate"] = stamp.strftime("%Y-%m-%d %H:%M:%S")
        row["quarter"] = quarter
        out.append(row)
    return out


def _summarize(catalog: SchemaCatalog, sales: list, keys: list, descriptions: dict, regions: dict) -> list:
    table = catalog.table(RETAIL_TABLE)
    skeleton = []
    for stock, country in keys:
        row = {c: None for c in table.column_names}
        row.update(stockcode=stock, country=country, description=descriptions[(stock, country)],
                   region=regions[country])
        skeleton.append(row)
    source_cols = catalog.table(RETAIL_SOURCE).columns
    typed_sales = [{c.name: typed_value(r[c.name], c) for c in source_cols} for r in sales]
    fresh = recompute_table(catalog, RETAIL_TABLE, {RETAIL_TABLE: skeleton, RETAIL_SOURCE: typed_sales})
    return [{c.name: canonical_value(r[c.name], c) for c in table.columns} for r in fresh]


def build_retail_summary(transactions, region_map=None, catalog: SchemaCatalog | None = None, *,
                         seed_ref: str | None = None) -> RetailBuild:
    """Summary table over sales, plus one case per return line.

    Sales (positive quantity) seed ``online_retail``; the summary is their
    per-(stockcode, country) aggregation. A return's truth is the change to
    total and quarter quantity when that return is appended to the sales.
    """
    catalog = catalog or bundled_catalog("retail")
    mapping = region_map if isinstance(region_map, dict) else load_region_map(region_map)
    lines = _normalize(*read_csv(transactions))
    unmapped = sorted({r["country"] or "" for r in lines} - set(mapping))
    if unmapped:
        raise DatasetError(f"unmapped country(ies): {', '.join(repr(c) for c in unmapped)}")
    regions = {c: mapping[c] for c in {r["country"] for r in lines}}

    src_cols = catalog.table(RETAIL_SOURCE).columns
    sales, returns, ignored = [], [], 0
    for r in lines:
        if r["quantity"] > 0:
            record = {c.name: r.get(c.name) for c in src_cols}
            record["invoice_line"] = len(sales) + 1
            sales.append({c.name: canonical_value(record[c.name], c) for c in src_cols})
        elif r["quantity"] < 0:
            returns.append(r)
        else:
            ignored += 1
    descriptions: dict = {}
    for s in sales:
        descriptions.setdefault((s["stockcode"], s["country"]), s["description"])
    keys = sorted(descriptions)
    summary = _summarize(catalog, sales, keys, descriptions, regions)
    seed_ref = seed_ref or state_ref("retail", {RETAIL_TABLE: summary, RETAIL_SOURCE: sales}, catalog)
    by_key = {(s["stockcode"], s["country"]): s for s in summary}

    cases, invalid = [], 0
    for r in returns:
        key = (r["stockcode"], r["country"])
        before = by_key.get(key)
        if before is None:
            invalid += 1
            continue
        record = {c.name: r.get(c.name) for c in src_cols}
        record["invoice_line"] = len(sales) + 1
        with_return = sales + [{c.name: canonical_value(record[c.name], c) for c in src_cols}]
        after = _summarize(catalog, with_return, [key], descriptions, regions)[0]
        columns = ("quantity", f"{r['quarter']}_quantity")
        delta = CellDelta(Cell(key, c, after[c]) for c in columns)
        facts = {"StockCode": r["stockcode"], "Quantity": str(r["quantity"]),
                 "InvoiceDate": r["raw_date"], "UnitPrice": r["price"], "Country": r["country"]}
        cases.append(UpdateCase(f"retail-{len(cases) + 1:04d}", "retail", facts, seed_ref,
                                RETAIL_TABLE, ("stockcode", "country"), delta))
    log.info("retail build: %d summary rows, %d cases, %d returns without target, %d zero lines",
             len(summary), len(cases), invalid, ignored)
    return RetailBuild(summary, sales, cases, invalid, ignored)
