"""Build the soccer and retail benchmark artifacts.

Uses the raw Transfermarkt/UCI exports when paths are given, else seeded
synthetic corpora of the same shape.

    python3 scripts/build_datasets.py --out data
    python3 scripts/build_datasets.py --year-a 2021.csv --year-b 2022.csv --transactions retail.csv
"""

from __future__ import annotations

import argparse
import sys

from castle.cli import main


def run(argv: list) -> None:
    code = main(argv)
    if code:
        sys.exit(code)


def build(out: str, seed: int, year_a=None, year_b=None, transactions=None) -> None:
    soccer = ["build-dataset", "soccer", "--out", f"{out}/soccer", "--seed", str(seed)]
    soccer += ["--year-a", year_a, "--year-b", year_b] if year_a and year_b else ["--synthetic"]
    retail = ["build-dataset", "retail", "--out", f"{out}/retail", "--seed", str(seed)]
    retail += ["--transactions", transactions] if transactions else ["--synthetic"]
    run(soccer)
    run(retail)


if __name__ == "__main__":
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--out", default="data")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--year-a")
    p.add_argument("--year-b")
    p.add_argument("--transactions")
    a = p.parse_args()
    build(a.out, a.seed, a.year_a, a.year_b, a.transactions)
