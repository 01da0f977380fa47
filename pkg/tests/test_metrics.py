from fractions import Fraction

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from castle.cells import Cell, CellDelta
from castle.db import RowSnapshot
from castle.errors import MetricError
from castle.forge import UpdateTargetSet
from castle.metrics import (GROUPS, MetricsReport, Tally, breakdown, cellwise_correctness, emit_report,
                            f1, failed_case, pct, precision, recall, render_csv, render_jsonl,
                            render_table, score_case)
from castle.schema import ColumnDef


def _snapshot(values: dict) -> RowSnapshot:
    rows = {}
    for (key, col), v in values.items():
        rows.setdefault(key, {})[col] = v
    return RowSnapshot("t", ("k",), tuple(sorted({c for _, c in values})), rows)


# Four truth cells; the statement targets three of them and gets two right.
TRUTH = CellDelta([(("a",), "x", "1"), (("b",), "x", "2"), (("c",), "x", "3"), (("d",), "x", "4")])
IDENTIFIED = {(("a",), "x"), (("b",), "x"), (("c",), "x")}
POST = _snapshot({(("a",), "x"): "1", (("b",), "x"): "2", (("c",), "x"): "9", (("d",), "x"): "4"})


def test_hand_case():
    assert recall(IDENTIFIED, TRUTH) == Fraction(3, 4)
    assert precision(IDENTIFIED, TRUTH) == 1
    assert f1(IDENTIFIED, TRUTH) == Fraction(6, 7)
    # d already holds its value but was never targeted, so it earns nothing
    assert cellwise_correctness(POST, TRUTH, identified=IDENTIFIED) == Fraction(1, 2)
    assert cellwise_correctness(POST, TRUTH) == Fraction(3, 4)
    t = score_case(IDENTIFIED, TRUTH, POST)
    assert (t.recall, t.f1, t.cc, t.type1, t.type2) == (Fraction(3, 4), Fraction(6, 7), Fraction(1, 2), 0, 1)


def test_empty_truth_is_undefined():
    with pytest.raises(MetricError, match="empty"):
        recall(set(), CellDelta())
    with pytest.raises(MetricError):
        cellwise_correctness(POST, CellDelta())


def test_nothing_identified_scores_zero():
    assert precision(set(), TRUTH) == 0 and f1(set(), TRUTH) == 0


def test_numeric_cells_compare_at_declared_scale():
    col = ColumnDef("x", "NUMERIC(5,2)", scale=2)
    truth = CellDelta([(("a",), "x", "1.50")])
    post = _snapshot({(("a",), "x"): "1.5"})
    assert cellwise_correctness(post, truth, {"x": col}) == 1
    assert cellwise_correctness(post, truth) == 0


def test_missing_truth_row_is_an_error():
    post = _snapshot({(("a",), "x"): "1"})
    with pytest.raises(MetricError, match="missing"):
        cellwise_correctness(post, TRUTH)


def test_failed_case_counts_every_required_cell_as_missed():
    t = failed_case(TRUTH)
    assert (t.recall, t.f1, t.cc, t.type2, t.failed) == (0, 0, 0, 4, 1)


def test_breakdown_rejects_ungrouped_columns():
    targets = UpdateTargetSet(("y",), (), ())
    with pytest.raises(MetricError, match="outside"):
        breakdown(IDENTIFIED, TRUTH, POST, targets)


def test_pct_rounds_half_up():
    assert pct(Fraction(6, 7)) == "85.71"
    assert pct(Fraction(1, 8)) == "12.50"
    assert pct(Fraction(1, 80000)) == "0.00"
    assert pct(Fraction(1, 20000)) == "0.01"
    assert pct(Fraction(1)) == "100.00"


# -- properties ---------------------------------------------------------------------------

KEYS = [(k,) for k in "abcdef"]
COLS = ["x", "y", "z"]
ADDRESSES = [(k, c) for k in KEYS for c in COLS]
VALUES = st.sampled_from(["0", "1", "2", None])


@st.composite
def scenarios(draw):
    truth_addrs = draw(st.sets(st.sampled_from(ADDRESSES), min_size=1))
    truth = CellDelta(Cell(k, c, draw(VALUES)) for k, c in sorted(truth_addrs))
    identified = draw(st.sets(st.sampled_from(ADDRESSES)))
    post = _snapshot({a: draw(VALUES) for a in ADDRESSES})
    return truth, identified, post


def _oracle(truth, identified, post):
    """Straight from the definitions, in floats."""
    required = {(c.row_key, c.column): c.value for c in truth}
    hit = len(set(required) & identified)
    r = hit / len(required)
    p = hit / len(identified) if identified else 0.0
    f = 2 * p * r / (p + r) if p + r else 0.0
    correct = sum(1 for a, v in required.items() if a in identified and post.rows[a[0]][a[1]] == v)
    return r, p, f, correct / len(required)


@settings(max_examples=300)
@given(scenarios())
def test_metrics_match_definitions(s):
    truth, identified, post = s
    r, p, f, cc = _oracle(truth, identified, post)
    t = score_case(identified, truth, post)
    assert float(t.recall) == pytest.approx(r) and float(recall(identified, truth)) == pytest.approx(r)
    assert float(t.precision) == pytest.approx(p)
    assert float(t.f1) == pytest.approx(f) and float(f1(identified, truth)) == pytest.approx(f)
    assert float(t.cc) == pytest.approx(cc)
    assert t.cc <= t.recall
    for value in (t.recall, t.precision, t.f1, t.cc):
        assert 0 <= value <= 1


@settings(max_examples=200)
@given(scenarios(), st.permutations(COLS))
def test_breakdown_conserves_cells(s, order):
    truth, identified, post = s
    targets = UpdateTargetSet((order[0],), (order[1],), (order[2],))
    parts = breakdown(identified, truth, post, targets)
    groups = [g for g in GROUPS[1:] if g in parts]
    assert sum(parts[g].required for g in groups) == parts["overall"].required
    assert sum(parts[g].hit for g in groups) == parts["overall"].hit
    assert sum(parts[g].correct for g in groups) == parts["overall"].correct
    assert sum(parts[g].identified for g in groups) <= parts["overall"].identified


@given(st.lists(scenarios(), min_size=1, max_size=6))
def test_tally_merge_is_order_independent(cases):
    tallies = [score_case(i, t, p) for t, i, p in cases]
    forward = sum(tallies, Tally())
    backward = sum(reversed(tallies), Tally())
    assert forward == backward
    assert forward.required == sum(len(t) for t, _, _ in cases)


# -- reports ------------------------------------------------------------------------------

def _reports():
    out = []
    for method in ("castle", "baseline", "multisql"):
        for model in ("m1", "m2", "m3"):
            for group in GROUPS:
                hit = len(method) + len(model) % 3
                out.append(MetricsReport(method, model, "soccer", group,
                                         Tally(identified=10, required=12, hit=min(hit, 10), correct=5,
                                               cases=3, cc_sum=Fraction(3, 2))))
    return out


def test_report_bounds_checked():
    with pytest.raises(MetricError, match="bounds"):
        MetricsReport("castle", "m", "soccer", "overall", Tally(identified=1, required=1, hit=2))


def test_table_is_a_three_by_three_grid_per_group():
    text = render_table(_reports())
    blocks = text.strip().split("\n\n")
    assert len(blocks) == len(GROUPS)
    first = blocks[0].splitlines()
    assert first[0] == "soccer / overall (Recall | F1 | CC, %)"
    assert first[1].split() == ["method", "m1", "m2", "m3"]
    assert [line.split()[0] for line in first[3:]] == ["baseline", "castle", "multisql"]


def test_emit_report_is_deterministic(tmp_path):
    reports = _reports()
    for fmt, ext in (("table-text", "txt"), ("csv", "csv"), ("json-lines", "jsonl")):
        a = emit_report(reports, fmt, tmp_path / f"a.{ext}").read_bytes()
        b = emit_report(list(reversed(reports)), fmt, tmp_path / f"b.{ext}").read_bytes()
        assert a == b
    header = render_csv(reports).splitlines()[0]
    assert header.startswith("method,model,dataset,group,recall,f1,cc")
    assert render_jsonl(reports).count("\n") == len(reports)


def test_emit_report_errors(tmp_path):
    with pytest.raises(MetricError, match="format"):
        emit_report(_reports(), "xml", tmp_path / "r.xml")
    blocker = tmp_path / "file"
    blocker.write_text("")
    with pytest.raises(MetricError, match="cannot write"):
        emit_report(_reports(), "csv", blocker / "r.csv")
