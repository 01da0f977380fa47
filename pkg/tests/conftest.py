"""Shared fixtures: one throwaway PostgreSQL cluster per session, one database per test."""

from __future__ import annotations

import itertools
from pathlib import Path

import pytest

from castle.datasets.catalogs import bundled_catalog
from castle.db import connect
from castle.errors import ConfigError

FIXTURES = Path(__file__).parent / "fixtures"
_db_names = itertools.count()


@pytest.fixture(scope="session")
def cluster():
    from castle.localpg import LocalCluster

    try:
        pg = LocalCluster()
        pg.start()
    except ConfigError as exc:
        pytest.skip(f"no local PostgreSQL available: {exc}")
    yield pg
    pg.stop()


@pytest.fixture
def dsn(cluster):
    """DSN of a fresh, empty database."""
    name = f"t{next(_db_names)}"
    with connect(cluster.dsn) as admin:
        admin.execute(f"CREATE DATABASE {name}")
    return cluster.dsn.replace("dbname=postgres", f"dbname={name}")


@pytest.fixture
def conn(dsn):
    c = connect(dsn)
    yield c
    c.close()


@pytest.fixture(scope="session")
def soccer_catalog():
    return bundled_catalog("soccer")


@pytest.fixture(scope="session")
def retail_catalog():
    return bundled_catalog("retail")


@pytest.fixture(scope="session")
def squad_trigger_sql():
    return (FIXTURES / "squad_size_trigger.sql").read_text(encoding="utf-8")


# -- acceptance summary: one PASS/FAIL line per criterion ------------------------------

_CRITERIA: dict = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("acceptance")
    if marker is None:
        return
    name = marker.args[0]
    if report.when == "call" or (report.when == "setup" and not report.passed):
        status = "PASS" if report.passed else "SKIP" if report.skipped else "FAIL"
        _CRITERIA[name] = status


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for name, status in _CRITERIA.items():
        terminalreporter.write_line(f"{status} {name}")
