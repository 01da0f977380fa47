"""Golden bench: every method on both datasets with hand-authored reference answers.

Starts a throwaway PostgreSQL cluster unless ``--dsn`` is given, builds the
synthetic datasets, and writes one report directory per (dataset, method)
under ``--out``. Castle scores 100 on every group by construction; baseline
and multisql answer with direct-column-only statements, so their cascade
and derived groups show what is lost without cascade reasoning.

    python3 scripts/run_golden_bench.py --out runs/golden --parallel 4
"""

from __future__ import annotations

import argparse
import contextlib
import sys
from pathlib import Path

from build_datasets import build

from castle.cli import main
from castle.db import connect
from castle.localpg import LocalCluster

METHODS = ("castle", "baseline", "multisql")


def fresh_database(admin_dsn: str, name: str) -> str:
    with connect(admin_dsn) as admin:
        admin.execute(f"DROP DATABASE IF EXISTS {name}")
        admin.execute(f"CREATE DATABASE {name}")
    return admin_dsn.replace("dbname=postgres", f"dbname={name}")


def bench_all(dsn: str, out: Path, parallel: int, seed: int) -> int:
    build(str(out / "data"), seed)
    status = 0
    for dataset in ("soccer", "retail"):
        for method in METHODS:
            target = fresh_database(dsn, f"golden_{dataset}_{method}")
            print(f"== {dataset} / {method}", flush=True)
            code = main(["bench", str(out / "data" / dataset), "--golden", "--method", method,
                         "--dsn", target, "--parallel", str(parallel),
                         "--fixture-dir", str(out / "fixtures" / dataset / method),
                         "--out", str(out / dataset / method)])
            status = status or code
    return status


if __name__ == "__main__":
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--dsn", help="admin DSN ending in dbname=postgres (default: start a local cluster)")
    p.add_argument("--out", default="runs/golden")
    p.add_argument("--parallel", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    a = p.parse_args()
    with contextlib.ExitStack() as stack:
        dsn = a.dsn or stack.enter_context(LocalCluster()).dsn
        sys.exit(bench_all(dsn, Path(a.out), a.parallel, a.seed))
