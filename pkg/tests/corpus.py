"""Adversarial scalar-subquery corpus and randomized database states.

Each item: (dialect, outer table, subquery text). Outer table is the UPDATE
target the subquery is evaluated against, so correlated references resolve.
"""

from __future__ import annotations

import random

from castle.bench import load_seed
from castle.datasets import retail_artifacts, soccer_artifacts
from castle.datasets.synthetic import synthetic_retail, synthetic_soccer

P = "player_record"
R = "online_retail_quarterly_summary"
PG, MY, MS = "postgresql", "mysql", "sqlserver"

ADVERSARIAL = [
    # unbounded selects over non-key predicates
    (PG, P, "SELECT coach_name FROM player_record WHERE club_code = 'psg'"),
    (PG, P, "SELECT DISTINCT coach_name FROM player_record WHERE club_code = 'psg'"),
    (PG, P, "SELECT coach_name FROM player_record WHERE player_code = 'lionel-messi'"),
    (PG, P, "SELECT coach_name FROM player_record WHERE player_id > 7"),
    (PG, P, "SELECT coach_name FROM player_record WHERE player_id = 7 OR player_id = 8"),
    (PG, P, "SELECT coach_name FROM player_record WHERE player_id IN (1, 2)"),
    (PG, P, "SELECT coach_name FROM player_record LIMIT 2"),
    (PG, P, "SELECT coach_name FROM (SELECT coach_name FROM player_record) s"),
    (PG, P, "SELECT p.coach_name FROM player_record p WHERE p.club_code = player_record.club_code"),
    (PG, P, "SELECT a.coach_name FROM player_record a JOIN player_record b ON a.club_code = b.club_code "
            "WHERE a.player_id = 1"),
    (PG, P, "SELECT coach_name FROM player_record WHERE club_code = 'psg' UNION "
            "SELECT coach_name FROM player_record WHERE club_code = 'fc-barcelona'"),
    (PG, P, "SELECT sum(age) OVER () FROM player_record"),
    (PG, P, "SELECT coach_name, club_name FROM player_record LIMIT 1"),
    (PG, P, "SELECT * FROM player_record LIMIT 1"),
    # grouped aggregates
    (PG, P, "SELECT count(*) FROM player_record GROUP BY club_code"),
    (PG, P, "SELECT avg(age) FROM player_record GROUP BY club_code HAVING count(*) > 1"),
    (PG, P, "SELECT max(coach_name) FROM player_record GROUP BY club_code HAVING club_code = 'psg'"),
    (PG, R, "SELECT sum(quantity) FROM online_retail_quarterly_summary WHERE stockcode = '84978' "
            "GROUP BY country"),
    # partial or disjunctive composite keys
    (PG, R, "SELECT quantity FROM online_retail_quarterly_summary WHERE stockcode = '84978'"),
    (PG, R, "SELECT quantity FROM online_retail_quarterly_summary WHERE stockcode = '84978' "
            "OR country = 'United Kingdom'"),
    (PG, R, "SELECT quantity FROM online_retail WHERE stockcode = '84978' AND country = 'United Kingdom'"),
    # dialect mismatches
    (MS, P, "SELECT coach_name FROM player_record WHERE club_code = 'psg' LIMIT 1"),
    (PG, P, "SELECT TOP 1 coach_name FROM player_record WHERE club_code = 'psg'"),
    # provably scalar
    (PG, P, "SELECT coach_name FROM player_record WHERE club_code = 'psg' LIMIT 1"),
    (MY, P, "SELECT coach_name FROM player_record WHERE club_code = 'psg' LIMIT 1"),
    (MS, P, "SELECT TOP 1 coach_name FROM player_record WHERE club_code = 'psg'"),
    (PG, P, "SELECT count(*) FROM player_record WHERE club_code = 'psg'"),
    (PG, P, "SELECT max(age) FROM player_record"),
    (PG, P, "SELECT max(age) FROM player_record GROUP BY club_code LIMIT 1"),
    (PG, P, "SELECT coach_name FROM player_record WHERE player_id = 7"),
    (PG, P, "SELECT coach_name FROM player_record WHERE player_id = 1 AND club_code = 'psg'"),
    (PG, P, "SELECT coach_name FROM player_record ORDER BY age DESC LIMIT 1"),
    (PG, P, "SELECT p.coach_name FROM player_record p WHERE p.player_id = player_record.player_id"),
    (PG, P, "SELECT count(*) FROM player_record p WHERE p.club_code = player_record.club_code"),
    (PG, P, "SELECT coach_name FROM (SELECT coach_name FROM player_record) s LIMIT 1"),
    (PG, P, "SELECT count(*) FROM player_record LIMIT 5"),
    (PG, P, "SELECT coach_name FROM player_record WHERE player_id = 1 LIMIT 1 OFFSET 1"),
    (PG, R, "SELECT quantity FROM online_retail_quarterly_summary WHERE stockcode = '84978' "
            "AND country = 'United Kingdom'"),
    (PG, R, "SELECT region FROM online_retail_quarterly_summary WHERE country = 'United Kingdom' LIMIT 1"),
    (PG, R, "SELECT quantity FROM online_retail WHERE invoice_line = 1"),
]


def random_state(conn, seed: int, dataset: str):
    """Seed ``conn`` with a randomized synthetic state; return the artifacts."""
    rng = random.Random(seed)
    if dataset == "soccer":
        players = rng.randint(20, 200)
        movers = rng.randint(1, min(40, players - 12))
        artifacts, _ = soccer_artifacts(*synthetic_soccer(seed, players=players, movers=movers, retirements=1))
    else:
        artifacts, _ = retail_artifacts(synthetic_retail(seed, sales=rng.randint(5, 200), returns=3))
    load_seed(conn, artifacts)
    return artifacts


def derived_mismatches(conn, catalog, table: str = "player_record") -> list:
    """(key, column, stored, expected) for every soccer derived cell that disagrees with its rule."""
    from castle.datasets.soccer import recompute
    from castle.db import snapshot

    snap = snapshot(conn, table, catalog=catalog)
    rows = list(snap.rows.values())
    expected = recompute(rows, catalog)
    out = []
    for key, row, want in zip(snap.rows, rows, expected):
        for col in catalog.derived_columns(table):
            if row[col] != want[col]:
                out.append((key, col, row[col], want[col]))
    return out
