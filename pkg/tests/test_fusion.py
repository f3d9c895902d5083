import numpy as np
import pytest

from kglp.candidates import CandidateList
from kglp.evaluation import EvalSplit, recall_at_cap
from kglp.fusion import (
    RetrievalModelReport,
    build_reports,
    infill_all,
    majority_vote_merge,
    priority_infill,
    priority_order,
    write_retrieval_report,
)

from conftest import make_random_graph


def clist(ents, head=0, relation=0, cap=100, source=""):
    scores = np.arange(len(ents), 0, -1, dtype=np.float64)
    return CandidateList(head, relation, np.asarray(ents, dtype=np.int64),
                         scores, cap=cap, sources=[source] * len(ents))


def test_infill_worked_example():
    # [a,b] + [b,c,d] at n=3 -> [a,b,c]
    a, b, c, d = 10, 11, 12, 13
    fused = priority_infill([clist([a, b], source="m1"),
                             clist([b, c, d], source="m2")], n=3)
    assert fused.entities.tolist() == [a, b, c]
    assert fused.sources == ["m1", "m1", "m2"]
    assert fused.scores.tolist() == [1.0, 0.5, 1 / 3]
    fused.validate()


def test_infill_edge_cases():
    a, b = 10, 11
    assert priority_infill([clist([a, b]), clist([b])], n=1).entities.tolist() == [a]
    single = priority_infill([clist([a, b])], n=50)
    assert single.entities.tolist() == [a, b]
    with pytest.raises(ValueError):
        priority_infill([], n=3)
    with pytest.raises(ValueError):
        priority_infill([clist([a])], n=0)
    with pytest.raises(ValueError, match="same query"):
        priority_infill([clist([a], head=0), clist([b], head=1)], n=3)


def test_priority_order_sorts_by_accuracy_then_tag():
    reports = [RetrievalModelReport("B", 0.9, 0.2, 1),
               RetrievalModelReport("A", 0.1, 0.5, 2)]
    assert priority_order(reports) == ["A", "B"]
    reports = [RetrievalModelReport("B", 0.5, 0.1, 1),
               RetrievalModelReport("A", 0.5, 0.1, 2)]
    assert priority_order(reports) == ["A", "B"]


def test_report_validation():
    with pytest.raises(ValueError):
        RetrievalModelReport("A", 1.5, 0.1, 1)
    with pytest.raises(ValueError):
        RetrievalModelReport("A", 0.5, -0.1, 1)


def test_build_reports_ranks_by_pooled_accuracy():
    dev = EvalSplit(queries=((0, 0), (1, 0)), answers=(5, 6))
    per_model = {
        "wide": [clist(list(range(20))), clist(list(range(20)))],  # hits both, 40 emitted
        "narrow": [clist([5]), clist([1])],  # one hit, 2 emitted
    }
    reports = build_reports(per_model, dev)
    by_tag = {r.model_tag: r for r in reports}
    assert by_tag["narrow"].accuracy == pytest.approx(0.5)
    assert by_tag["wide"].accuracy == pytest.approx(2 / 40)
    assert by_tag["narrow"].priority_rank == 1
    assert by_tag["wide"].priority_rank == 2
    assert priority_order(reports) == ["narrow", "wide"]
    with pytest.raises(ValueError):
        build_reports({}, dev)


def test_majority_vote_merge():
    lists = [clist([1, 2, 3]), clist([2, 3, 4]), clist([3, 9, 2])]
    got = majority_vote_merge(lists, n=3)
    # votes: 2 and 3 appear thrice; 2 has the better best-rank
    assert got.entities.tolist() == [2, 3, 1]
    assert got.sources == ["vote"] * 3


def test_infill_all_checks_alignment():
    per_model = {"a": [clist([1])], "b": [clist([2]), clist([3])]}
    with pytest.raises(ValueError, match="number of queries"):
        infill_all(per_model, ["a", "b"], n=5)
    with pytest.raises(ValueError, match="unknown model tags"):
        infill_all({"a": [clist([1])]}, ["a", "zz"], n=5)


def test_fused_recall_never_below_best_single():
    # random per-model lists over random graphs; fused must dominate
    for seed in range(30):
        rng = np.random.default_rng(seed)
        num_queries = int(rng.integers(2, 8))
        ne = 30
        queries = [(int(rng.integers(0, ne)), 0) for _ in range(num_queries)]
        answers = [int(rng.integers(0, ne)) for _ in range(num_queries)]
        dev = EvalSplit(queries=tuple(queries), answers=tuple(answers))
        per_model = {}
        for m in range(int(rng.integers(1, 5))):
            lists = []
            for (h, r) in queries:
                size = int(rng.integers(0, 10))
                ents = rng.choice(ne, size=size, replace=False)
                lists.append(clist(ents.tolist(), head=h, relation=r,
                                   source=f"m{m}"))
            per_model[f"m{m}"] = lists
        reports = build_reports(per_model, dev)
        order = priority_order(reports)
        fused = infill_all(per_model, order, n=12)
        for cl in fused:
            cl.validate()
        best_single = max(recall_at_cap(lists, dev) for lists in per_model.values())
        assert recall_at_cap(fused, dev) >= best_single


def test_write_retrieval_report(tmp_path):
    p = tmp_path / "r.txt"
    write_retrieval_report(p, [RetrievalModelReport("m1", 0.5, 0.25, 1)])
    text = p.read_text(encoding="utf-8")
    assert "model_tag" in text and "m1" in text and "0.250000" in text
