import numpy as np
import pytest

from kglp.candidates import CandidateList, read_candidate_lists, write_candidate_lists


def test_from_scores_sorts_and_breaks_ties_by_entity():
    cl = CandidateList.from_scores(0, 0, [5, 2, 9, 1], [0.5, 0.9, 0.5, 0.1], cap=10)
    assert cl.entities.tolist() == [2, 5, 9, 1]
    assert cl.scores.tolist() == [0.9, 0.5, 0.5, 0.1]
    cl.validate()


def test_from_scores_truncates_to_cap():
    cl = CandidateList.from_scores(0, 0, [1, 2, 3], [3.0, 2.0, 1.0], cap=2)
    assert cl.entities.tolist() == [1, 2]
    with pytest.raises(ValueError):
        CandidateList.from_scores(0, 0, [1], [1.0], cap=0)
    with pytest.raises(ValueError):
        CandidateList.from_scores(0, 0, [1, 2], [1.0], cap=5)


def test_validate_rejects_duplicates_and_misorder():
    bad = CandidateList(0, 0, np.array([1, 1]), np.array([2.0, 1.0]), cap=5)
    with pytest.raises(ValueError, match="duplicate"):
        bad.validate()
    bad = CandidateList(0, 0, np.array([1, 2]), np.array([1.0, 2.0]), cap=5)
    with pytest.raises(ValueError, match="sorted"):
        bad.validate()
    bad = CandidateList(0, 0, np.array([2, 1]), np.array([1.0, 1.0]), cap=5)
    with pytest.raises(ValueError, match="sorted"):
        bad.validate()
    bad = CandidateList(0, 0, np.array([1, 2]), np.array([2.0, 1.0]), cap=1)
    with pytest.raises(ValueError, match="cap"):
        bad.validate()


def test_rank_of():
    cl = CandidateList.from_scores(0, 0, [4, 7], [1.0, 0.5], cap=5)
    assert cl.rank_of(4) == 1
    assert cl.rank_of(7) == 2
    assert cl.rank_of(9) == 0


def test_round_trip_preserves_floats_and_sources(tmp_path):
    rng = np.random.default_rng(0)
    lists = []
    for q in range(20):
        n = int(rng.integers(0, 8))
        ents = rng.choice(100, size=n, replace=False)
        scores = rng.standard_normal(n)
        cl = CandidateList.from_scores(q, q % 3, ents, scores, cap=50,
                                       source=f"m{q % 2}")
        lists.append(cl)
    path = tmp_path / "c.cands"
    write_candidate_lists(path, lists, header="test lists v1")
    back = read_candidate_lists(path, cap=50)
    assert path.read_text(encoding="utf-8").startswith("# test lists v1\n")
    assert len(back) == len(lists)
    for a, b in zip(lists, back):
        assert a.head == b.head and a.relation == b.relation
        assert a.entities.tolist() == b.entities.tolist()
        assert a.scores.tolist() == b.scores.tolist()  # repr round-trip is exact
        assert a.sources == b.sources


def test_read_rejects_malformed(tmp_path):
    p = tmp_path / "c.cands"
    p.write_text("0\n", encoding="utf-8")
    with pytest.raises(ValueError, match="malformed candidate line 1"):
        read_candidate_lists(p, cap=5)
    p.write_text("0 0 1:2:x:y\n", encoding="utf-8")
    with pytest.raises(ValueError, match="line 1"):
        read_candidate_lists(p, cap=5)
