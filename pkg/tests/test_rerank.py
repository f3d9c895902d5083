import numpy as np
import pytest

from kglp.candidates import CandidateList
from kglp.evaluation import EvalSplit, mrr_at_10
from kglp.rerank import (
    EnsembleSpec,
    ModelScoreSet,
    direct_ensemble,
    ensemble_predict,
    greedy_select,
    greedy_select_with_trace,
    grid_points,
    grid_search_weights,
    normalize_scores,
    read_ensemble_spec,
    write_ensemble_spec,
    write_top10,
)


def shared_lists(entities_per_query, cap=100):
    out = []
    for ents in entities_per_query:
        scores = np.arange(len(ents), 0, -1, dtype=np.float64)
        out.append(CandidateList(0, 0, np.asarray(ents, dtype=np.int64),
                                 scores, cap=cap))
    return out


def mset(tag, rows):
    return ModelScoreSet(tag, [np.asarray(r, dtype=np.float64) for r in rows])


def test_rank_normalization_worked_example():
    got = normalize_scores(mset("m", [[3.0, 1.0, 2.0]]), "rank")
    assert got.scores[0].tolist() == [1.0, 1 / 3, 0.5]
    # ties resolve by list position
    got = normalize_scores(mset("m", [[2.0, 2.0, 1.0]]), "rank")
    assert got.scores[0].tolist() == [1.0, 0.5, 1 / 3]


def test_minmax_normalization_worked_example():
    got = normalize_scores(mset("m", [[3.0, 1.0, 2.0]]), "minmax")
    assert got.scores[0].tolist() == [1.0, 0.0, 0.5]
    got = normalize_scores(mset("m", [[5.0, 5.0]]), "minmax")
    assert got.scores[0].tolist() == [0.5, 0.5]
    with pytest.raises(ValueError, match="unknown normalization"):
        normalize_scores(mset("m", [[1.0]]), "zscore")


def test_score_set_validation():
    lists = shared_lists([[1, 2], [3]])
    mset("m", [[0.1, 0.2], [0.3]]).validate_against(lists)
    with pytest.raises(ValueError, match="score rows"):
        mset("m", [[0.1, 0.2]]).validate_against(lists)
    with pytest.raises(ValueError, match="row 1"):
        mset("m", [[0.1, 0.2], [0.3, 0.4]]).validate_against(lists)
    with pytest.raises(ValueError, match="non-finite"):
        mset("m", [[0.1, np.nan], [0.3]]).validate_against(lists)


def test_ensemble_spec_validation():
    EnsembleSpec(("a",), (1.0,))
    with pytest.raises(ValueError):
        EnsembleSpec(("a", "b"), (1.0,))
    with pytest.raises(ValueError):
        EnsembleSpec(("a",), (-1.0,))
    with pytest.raises(ValueError):
        EnsembleSpec(("a", "b"), (0.7, 0.6))
    with pytest.raises(ValueError):
        EnsembleSpec(("a",), (1.0,), normalization="other")


def test_weighted_sum_hand_fixture():
    # 3 candidates, 2 models, minmax normalization keeps raw structure visible
    lists = shared_lists([[10, 11, 12]])
    a = mset("a", [[1.0, 0.0, 0.5]])
    b = mset("b", [[0.0, 1.0, 0.5]])
    spec = EnsembleSpec(("a", "b"), (0.8, 0.2), normalization="minmax")
    out = ensemble_predict(spec, [a, b], lists)[0]
    # combined: 10 -> .8, 11 -> .2, 12 -> .5
    assert out.entities.tolist() == [10, 12, 11]
    assert out.scores.tolist() == pytest.approx([0.8, 0.5, 0.2])


def test_corner_weight_reproduces_single_model():
    lists = shared_lists([[1, 2, 3], [4, 5, 6]])
    a = mset("a", [[0.3, 0.2, 0.1], [0.1, 0.9, 0.5]])
    b = mset("b", [[9.0, 1.0, 5.0], [2.0, 1.0, 3.0]])
    spec = EnsembleSpec(("a", "b"), (1.0, 0.0))
    out = ensemble_predict(spec, [a, b], lists)
    alone = ensemble_predict(EnsembleSpec(("a",), (1.0,)), [a], lists)
    for x, y in zip(out, alone):
        assert x.entities.tolist() == y.entities.tolist()


def test_equal_scores_tie_break_by_entity_id():
    lists = shared_lists([[7, 3, 5]])
    a = mset("a", [[1.0, 1.0, 1.0]])
    spec = EnsembleSpec(("a",), (1.0,), normalization="minmax")
    out = ensemble_predict(spec, [a], lists)[0]
    assert out.entities.tolist() == [3, 5, 7]


def test_greedy_selects_single_best_and_stops():
    dev = EvalSplit(queries=((0, 0), (0, 0)), answers=(1, 4))
    lists = shared_lists([[1, 2], [4, 5]])
    good = mset("good", [[1.0, 0.0], [1.0, 0.0]])
    bad = mset("bad", [[0.0, 1.0], [0.0, 1.0]])
    selected, trace = greedy_select_with_trace([good, bad], lists, dev)
    assert selected == ["good"]
    assert trace == [1.0]
    # a duplicate of the winner adds nothing and is not selected
    clone = mset("good2", [[1.0, 0.0], [1.0, 0.0]])
    assert greedy_select([good, bad, clone], lists, dev) == ["good"]
    with pytest.raises(ValueError):
        greedy_select([], lists, dev)
    with pytest.raises(ValueError, match="duplicate"):
        greedy_select([good, mset("good", [[1.0, 0.0], [1.0, 0.0]])], lists, dev)


def complementary_fixture():
    # model a is perfect on query 0 and ranks the answer second on query 1;
    # model b the reverse, so the equal-weight blend wins both queries
    dev = EvalSplit(queries=((0, 0), (0, 0)), answers=(1, 4))
    lists = shared_lists([[1, 2, 3], [4, 5, 6]])
    a = mset("a", [[5.0, 0.0, 1.0], [1.0, 5.0, 0.0]])
    b = mset("b", [[1.0, 5.0, 0.0], [5.0, 0.0, 1.0]])
    return dev, lists, a, b


def test_greedy_combines_complementary_models():
    dev, lists, a, b = complementary_fixture()
    selected, trace = greedy_select_with_trace([a, b], lists, dev)
    assert selected == ["a", "b"]
    assert len(trace) == 2 and trace[1] > trace[0]
    single = max(
        mrr_at_10(ensemble_predict(EnsembleSpec((t,), (1.0,)), [a, b], lists), dev)
        for t in ("a", "b"))
    assert trace[1] > single


def test_greedy_trace_is_non_decreasing_on_random_fixtures():
    for seed in range(40):
        rng = np.random.default_rng(seed)
        nq = int(rng.integers(1, 5))
        width = int(rng.integers(1, 8))
        ents = [rng.choice(50, size=width, replace=False) for _ in range(nq)]
        lists = shared_lists([e.tolist() for e in ents])
        dev = EvalSplit(queries=tuple((0, 0) for _ in range(nq)),
                        answers=tuple(int(rng.choice(e)) for e in ents))
        models = [mset(f"m{i}", [rng.standard_normal(width) for _ in range(nq)])
                  for i in range(int(rng.integers(1, 6)))]
        selected, trace = greedy_select_with_trace(models, lists, dev)
        assert len(selected) == len(trace) <= 6
        assert all(b >= a for a, b in zip(trace, trace[1:]))
        if len(trace) > 1:
            assert all(b > a for a, b in zip(trace, trace[1:]))


def test_grid_point_counts():
    assert grid_points(1, 10) == 1
    assert grid_points(2, 10) == 11
    assert grid_points(3, 10) == 66
    assert grid_points(2, 10, strictly_positive=True) == 9
    assert grid_points(3, 2, strictly_positive=True) == 0


def test_grid_search_corner_and_interior():
    # any weight on the noise model lifts the decoy above the answer, so the
    # pure corner is the unique maximizer
    dev = EvalSplit(queries=((0, 0),), answers=(1,))
    lists = shared_lists([[1, 2, 3]])
    dom = mset("dom", [[1.0, 0.95, 0.0]])
    noise = mset("noise", [[0.0, 1.0, 0.5]])
    spec = grid_search_weights([dom, noise], lists, dev, step=0.1,
                               normalization="minmax")
    assert spec.weights == (1.0, 0.0)

    dev, lists, a, b = complementary_fixture()
    spec = grid_search_weights([a, b], lists, dev, step=0.1)
    assert 0.0 < spec.weights[0] < 1.0  # interior mixture beats both corners
    single = mset("single", [[1.0]])
    one = grid_search_weights([single], shared_lists([[1]]),
                              EvalSplit(queries=((0, 0),), answers=(1,)), step=0.5)
    assert one.weights == (1.0,)


def test_grid_search_tie_break_is_lexicographically_smallest():
    # two identical models: every mixture scores the same, first point wins
    dev = EvalSplit(queries=((0, 0),), answers=(1,))
    lists = shared_lists([[1, 2]])
    a = mset("a", [[1.0, 0.0]])
    b = mset("b", [[1.0, 0.0]])
    spec = grid_search_weights([a, b], lists, dev, step=0.5)
    assert spec.weights == (0.0, 1.0)  # lexicographically first composition


def test_grid_search_budget_and_step_errors():
    dev = EvalSplit(queries=((0, 0),), answers=(1,))
    lists = shared_lists([[1, 2]])
    models = [mset(f"m{i}", [[1.0, 0.0]]) for i in range(4)]
    with pytest.raises(ValueError, match="coarser step"):
        grid_search_weights(models, lists, dev, step=0.001, budget=100)
    with pytest.raises(ValueError, match="evenly divide"):
        grid_search_weights(models[:2], lists, dev, step=0.3)
    with pytest.raises(ValueError):
        grid_search_weights([], lists, dev)


def test_direct_ensemble_keeps_every_model_positive():
    dev, lists, a, b = complementary_fixture()
    spec = direct_ensemble([a, b], lists, dev, step=0.1)
    assert set(spec.selected_models) == {"a", "b"}
    assert all(w > 0 for w in spec.weights)


def test_ensemble_spec_round_trip(tmp_path):
    spec = EnsembleSpec(("m1", "m2"), (0.3, 0.7), normalization="minmax")
    p = tmp_path / "e.spec"
    write_ensemble_spec(p, spec)
    assert read_ensemble_spec(p) == spec
    p.write_text("m1 1.0\n", encoding="utf-8")
    with pytest.raises(ValueError, match="missing normalization"):
        read_ensemble_spec(p)
    p.write_text("normalization rank\nm1 0.5 extra\n", encoding="utf-8")
    with pytest.raises(ValueError, match="line 2"):
        read_ensemble_spec(p)


def test_ensemble_predict_requires_score_sets():
    spec = EnsembleSpec(("a", "b"), (0.5, 0.5))
    with pytest.raises(ValueError, match="missing"):
        ensemble_predict(spec, [mset("a", [[1.0]])], shared_lists([[1]]))


def test_write_top10(tmp_path):
    lists = shared_lists([list(range(20, 35)), [40]])
    p = tmp_path / "t.txt"
    write_top10(p, lists)
    lines = p.read_text(encoding="utf-8").splitlines()
    assert lines[0].split() == ["0", "0"] + [str(e) for e in range(20, 30)]
    assert lines[1].split() == ["0", "0", "40"]
