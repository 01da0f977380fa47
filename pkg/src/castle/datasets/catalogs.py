"""Bundled schemas and annotation rules for both benchmarks."""

from __future__ import annotations

from functools import lru_cache
from importlib import resources

from castle.schema import SchemaCatalog, annotate_roles, load_annotations, load_schema

SOCCER_TABLE = "player_record"
RETAIL_TABLE = "online_retail_quarterly_summary"
RETAIL_SOURCE = "online_retail"

TARGET_TABLE = {"soccer": SOCCER_TABLE, "retail": RETAIL_TABLE}
ROW_KEY = {"soccer": ("player_code",), "retail": ("stockcode", "country")}


def asset_text(name: str) -> str:
    return resources.files("castle.assets").joinpath(name).read_text(encoding="utf-8")


@lru_cache(maxsize=None)
def bundled_catalog(dataset: str) -> SchemaCatalog:
    """Schema of ``dataset`` with its derived columns annotated."""
    catalog = load_schema(asset_text(f"{dataset}_schema.sql"))
    return annotate_roles(catalog, load_annotations(asset_text(f"{dataset}_annotations.csv")))
