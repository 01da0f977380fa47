"""Benchmark builders: soccer transfers and retail returns."""

from castle.datasets.assemble import retail_artifacts, soccer_artifacts
from castle.datasets.retail import build_retail_summary, derive_quarter, load_region_map, map_region
from castle.datasets.seed import DatasetArtifacts, load_artifacts, seed_sql, write_artifacts
from castle.datasets.soccer import CLUB_COLUMNS, build_soccer_cases

__all__ = [
    "CLUB_COLUMNS", "DatasetArtifacts", "build_retail_summary", "build_soccer_cases", "derive_quarter",
    "load_artifacts", "load_region_map", "map_region", "retail_artifacts", "seed_sql", "soccer_artifacts",
    "write_artifacts",
]
