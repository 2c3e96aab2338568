"""Metric functions, timeline export, and report rendering."""

from __future__ import annotations

import json

import pytest

from storymem.backends import Backend, RuleBackend
from storymem.errors import EmptySamples, ZeroHistory
from storymem.metrics import (
    compression_rate,
    constraint_recall,
    coverage_rate,
    distribution,
    export_timeline,
    j_score,
    latency_percentiles,
    offline_series,
    percentile,
    render_report_table,
    write_report,
)
from storymem.prompts import PromptKind
from storymem.reasoner import Reasoner
from storymem.runio import RunReader
from storymem.transcript import EvalQuestion


def make_q(qid, text, gold, evidence=(), category="single_hop"):
    return EvalQuestion(
        question_id=qid,
        text=text,
        category=category,
        gold_answer=gold,
        evidence_turn_ids=frozenset(evidence),
    )


# --- percentiles ------------------------------------------------------------------


def test_percentile_nearest_rank():
    data = [5.0, 1.0, 4.0, 2.0, 3.0]
    assert percentile(data, 50) == 3.0
    assert percentile(data, 1) == 1.0
    assert percentile(data, 100) == 5.0
    ten = [float(i) for i in range(1, 11)]
    assert percentile(ten, 50) == 5.0
    assert percentile(ten, 90) == 9.0
    assert percentile(ten, 95) == 10.0
    assert percentile(ten, 99) == 10.0
    assert percentile([7.5], 99) == 7.5


def test_percentile_empty():
    with pytest.raises(EmptySamples):
        percentile([], 50)
    with pytest.raises(EmptySamples):
        latency_percentiles([])


def test_latency_percentile_grid():
    ten = [float(i) for i in range(1, 11)]
    assert latency_percentiles(ten) == (5.0, 9.0, 10.0, 10.0)


# --- compression ------------------------------------------------------------------


def test_compression_rate():
    assert compression_rate(1000, 37) == pytest.approx(96.3)
    assert compression_rate(100, 0) == 100.0
    assert compression_rate(100, 100) == 0.0
    assert compression_rate(100, 250) == 0.0  # clamped, never negative


def test_compression_rejects_empty_history():
    with pytest.raises(ZeroHistory):
        compression_rate(0, 10)
    with pytest.raises(ZeroHistory):
        compression_rate(-5, 10)


def test_distribution():
    assert distribution([4.0, 1.0, 3.0, 2.0]) == {
        "median": 2.0,
        "q1": 1.0,
        "q3": 3.0,
        "min": 1.0,
        "max": 4.0,
        "n": 4,
    }
    with pytest.raises(EmptySamples):
        distribution([])


# --- coverage and recall ------------------------------------------------------------


def test_coverage_rate():
    questions = [
        make_q("qa", "?", "x", evidence={"s1", "s2"}, category="single_hop"),
        make_q("qb", "?", "x", evidence={"s3"}, category="temporal"),
        make_q("qc", "?", "x", evidence=(), category="temporal"),
    ]
    retrieved = {"qa": {"s1", "s2", "extra"}, "qb": {"s1"}}
    cov = coverage_rate(questions, retrieved)
    assert cov["overall"] == 50.0
    assert cov["per_category"] == {"single_hop": 100.0, "temporal": 0.0}
    assert cov["covered"] == {"qa": True, "qb": False}
    assert cov["misses"] == {"qb": ["s3"]}
    assert cov["excluded"] == ["qc"]
    assert cov["n"] == 2


def test_coverage_rate_all_excluded():
    cov = coverage_rate([make_q("q", "?", "x")], {})
    assert cov["overall"] == 0.0
    assert cov["n"] == 0
    assert cov["excluded"] == ["q"]


def test_constraint_recall():
    instructions = [
        ("i1", ["t1", "t2", "t3", "t4"]),
        ("i2", ["t9"]),
        ("i3", []),
    ]
    retrieved = {"i1": {"t1", "t2"}, "i2": set()}
    rec = constraint_recall(instructions, retrieved)
    assert rec["per_instruction"] == {"i1": 50.0, "i2": 0.0}
    assert rec["mean"] == 25.0
    assert rec["n"] == 2


def test_constraint_recall_empty():
    assert constraint_recall([], {}) == {"mean": 0.0, "per_instruction": {}, "n": 0}


# --- answer judging -----------------------------------------------------------------


def test_j_score_counts_unjudgeable_as_wrong():
    questions = [
        make_q("q1", "What did Mela buy at the market?", "a shell necklace"),
        make_q("q2", "What did Tomas fly at the beach?", "a blue kite", category="temporal"),
        make_q("q3", "Unanswered?", "whatever", category="adversarial"),
    ]
    answers = {
        "q1": "She bought a shell necklace at the stall",
        "q2": "Unknown",
    }
    result = j_score(questions, answers, Reasoner(RuleBackend()))
    assert result["verdicts"] == {"q1": "correct", "q2": "wrong", "q3": "unjudgeable"}
    assert result["overall"] == pytest.approx(100.0 / 3.0)
    assert result["unjudgeable"] == 1
    assert result["n"] == 3
    assert result["per_category"]["single_hop"] == 100.0
    assert result["per_category"]["adversarial"] == 0.0


def test_j_score_exclude_unjudgeable():
    questions = [
        make_q("q1", "What did Mela buy at the market?", "a shell necklace"),
        make_q("q2", "What did Tomas fly at the beach?", "a blue kite", category="temporal"),
        make_q("q3", "Unanswered?", "whatever", category="adversarial"),
    ]
    answers = {
        "q1": "She bought a shell necklace at the stall",
        "q2": "Unknown",
    }
    result = j_score(questions, answers, Reasoner(RuleBackend()), exclude_unjudgeable=True)
    assert result["overall"] == 50.0
    assert result["per_category"]["adversarial"] is None


class GarbledJudge(Backend):
    """Rule backend whose judge replies are unparseable prose."""

    name = "garbled"

    def __init__(self):
        self.inner = RuleBackend()

    def complete(self, kind: PromptKind, rendered: str) -> str:
        if kind is PromptKind.JUDGE:
            return "I think it is probably right"
        return self.inner.complete(kind, rendered)


def test_j_score_judge_parse_failures_become_unjudgeable():
    questions = [
        make_q("q1", "?", "alpha"),
        make_q("q2", "?", "beta"),
    ]
    answers = {"q1": "alpha", "q2": "beta"}
    result = j_score(questions, answers, Reasoner(GarbledJudge()))
    assert result["unjudgeable"] == 2
    assert result["overall"] == 0.0
    excluded = j_score(questions, answers, Reasoner(GarbledJudge()), exclude_unjudgeable=True)
    assert excluded["overall"] == 0.0
    assert excluded["per_category"]["single_hop"] is None


# --- offline complexity series ----------------------------------------------------------


def test_offline_series_accumulates():
    records = [
        {"iteration": 1, "offline_latency": 0.5},
        {"iteration": 2, "offline_latency": 0.25},
        {"iteration": 5, "offline_latency": 0.25},  # beyond the token list
    ]
    series = offline_series(records, [10, 20, 30])
    assert series == [(10, 0.5), (30, 0.75), (30, 1.0)]


# --- timeline export ---------------------------------------------------------------------


def test_export_timeline_from_run_snapshots(b0_run):
    _, paths = b0_run
    timeline = export_timeline(RunReader(paths.root).snapshots())
    assert timeline.iterations == list(range(1, 61))
    assert len(timeline.narratives) == 20
    # the init batch lands 20 fragments at the crossing tick
    assert sum(n.bound.get(21, 0) for n in timeline.narratives) == 20
    # one fragment per later tick, minus the unbound crossing turn
    assert sum(sum(n.bound.values()) for n in timeline.narratives) == 59
    markers = {i for n in timeline.narratives for i in n.markers}
    assert markers == {23, 25, 26, 31, 32, 37, 38, 43, 44, 49, 50, 55, 56}


def synthetic_snapshots():
    def bank(*narratives):
        return {"narratives": [
            {"owner": o, "topic": t, "fragments": [{}] * frags, "subplots": [{}] * subs}
            for o, t, frags, subs in narratives
        ]}

    return [
        (1, bank(("A,B", "The move", 2, 0))),
        (2, bank(("A,B", "The move", 3, 1), ("C", 'say "hi"', 1, 0))),
    ]


def test_export_timeline_diffs_and_csv_quoting():
    timeline = export_timeline(synthetic_snapshots())
    by_key = {(n.owner, n.topic): n for n in timeline.narratives}
    mover = by_key[("A,B", "The move")]
    assert mover.bound == {1: 2, 2: 1}
    assert mover.markers == [2]
    assert by_key[("C", 'say "hi"')].bound == {2: 1}
    csv_text = timeline.to_csv()
    lines = csv_text.splitlines()
    assert lines[0] == "owner,topic,iteration,bound_fragments,subplots_created"
    assert '"A,B",The move,1,2,0' in lines
    assert '"A,B",The move,2,1,1' in lines
    assert 'C,"say ""hi""",2,1,0' in lines
    assert csv_text.endswith("\n")


def test_export_timeline_to_dict():
    timeline = export_timeline(synthetic_snapshots())
    data = timeline.to_dict()
    assert data["iterations"] == [1, 2]
    mover = next(n for n in data["narratives"] if n["topic"] == "The move")
    assert mover["bound"] == {"1": 2, "2": 1}
    assert mover["markers"] == [2]


# --- report rendering ------------------------------------------------------------------


def test_render_report_table():
    report = {
        "jscore": {
            "overall": 66.7,
            "n": 3,
            "unjudgeable": 1,
            "per_category": {"single_hop": 100.0, "adversarial": None},
        },
        "coverage": {
            "2": {"overall": 50.0, "n": 4},
            "10": {"overall": 75.0, "n": 4},
        },
        "compression": {"median": 95.5, "q1": 90.0, "q3": 97.0, "n": 13},
        "latency": {"online": [0.001, 0.002, 0.003, 0.004]},
        "recall": {"mean": 88.2},
    }
    text = render_report_table(report)
    assert "J-score overall: 66.7%  (n=3, unjudgeable=1)" in text
    assert "n/a" in text  # category with no judgeable answers
    assert text.index("k=2:") < text.index("k=10:")  # numeric, not lexical, order
    assert "Compression: median 95.5%  q1 90.0%  q3 97.0%  (n=13)" in text
    assert "Latency online: p50 1.0ms  p90 2.0ms  p95 3.0ms  p99 4.0ms" in text
    assert "Constraint recall mean: 88.2%" in text


def test_render_report_table_isolates_section_errors():
    report = {
        "jscore": {"error": "boom"},
        "coverage": {"error": "boom"},
        "compression": {"error": "boom"},
        "latency": {"error": "boom"},
        "recall": {"error": "boom"},
    }
    text = render_report_table(report)
    for name in ("J-score", "Coverage", "Compression", "Latency", "Constraint recall"):
        assert f"{name}: error: boom" in text


def test_render_report_table_empty():
    assert render_report_table({}) == "(empty report)"


def test_write_report(tmp_path):
    path = tmp_path / "report.json"
    write_report({"b": 1, "a": 2}, path)
    text = path.read_text()
    assert text.endswith("\n")
    assert json.loads(text) == {"a": 2, "b": 1}
    assert text.index('"a"') < text.index('"b"')
