"""Turn builder output into loadable dataset artifacts."""

from __future__ import annotations

from castle.datasets.catalogs import RETAIL_SOURCE, RETAIL_TABLE, SOCCER_TABLE, bundled_catalog
from castle.datasets.retail import build_retail_summary
from castle.datasets.seed import DatasetArtifacts
from castle.datasets.soccer import build_soccer_cases
from castle.datasets.tabular import state_ref


def soccer_artifacts(year_a, year_b) -> tuple:
    """(artifacts, build) for a pair of yearly player snapshots."""
    catalog = bundled_catalog("soccer")
    build = build_soccer_cases(year_a, year_b, catalog)
    rows = {SOCCER_TABLE: build.seed_rows}
    ref = build.cases[0].seed_ref if build.cases else state_ref("soccer", rows, catalog)
    return DatasetArtifacts("soccer", ref, catalog, rows, build.cases), build


def retail_artifacts(transactions, region_map=None) -> tuple:
    """(artifacts, build) for a transaction log."""
    catalog = bundled_catalog("retail")
    build = build_retail_summary(transactions, region_map, catalog)
    rows = {RETAIL_TABLE: build.summary_rows, RETAIL_SOURCE: build.transaction_rows}
    ref = build.cases[0].seed_ref if build.cases else state_ref("retail", rows, catalog)
    return DatasetArtifacts("retail", ref, catalog, rows, build.cases), build
