"""Two-step ensembling of per-model candidate scores.

All models score the same per-query candidate lists. Scores are first put on
a common scale (reciprocal-rank by default, min-max optional), then a greedy
pass picks models whose equal-weight inclusion improves dev MRR@10, and a
grid search over the weight simplex assigns final weights. Weighted sums
rank candidates, ties broken by ascending entity id.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import combinations_with_replacement

import numpy as np

from .candidates import CandidateList
from .evaluation import EvalSplit, mrr_at_10

NORMALIZATIONS = ("rank", "minmax")
MAX_SELECTED = 6
DEFAULT_GRID_BUDGET = 500_000


@dataclass
class ModelScoreSet:
    """One model's scores for every query, aligned to shared candidate lists."""

    model_tag: str
    scores: list[np.ndarray]

    def validate_against(self, candidates: list[CandidateList]) -> None:
        if len(self.scores) != len(candidates):
            raise ValueError(f"{self.model_tag}: score rows != query count")
        for qi, (s, cl) in enumerate(zip(self.scores, candidates)):
            if len(s) != len(cl):
                raise ValueError(f"{self.model_tag}: row {qi} misaligned with candidates")
            if not np.isfinite(s).all():
                raise ValueError(f"{self.model_tag}: non-finite score in row {qi}")


@dataclass(frozen=True)
class EnsembleSpec:
    selected_models: tuple[str, ...]
    weights: tuple[float, ...]
    normalization: str = "rank"

    def __post_init__(self):
        if len(self.selected_models) != len(self.weights):
            raise ValueError("one weight required per selected model")
        if self.normalization not in NORMALIZATIONS:
            raise ValueError(f"unknown normalization {self.normalization!r}")
        if any(w < 0 for w in self.weights):
            raise ValueError("weights must be non-negative")
        if abs(sum(self.weights) - 1.0) > 1e-9:
            raise ValueError("weights must sum to 1")


def _rank_normalize(row: np.ndarray) -> np.ndarray:
    order = np.lexsort((np.arange(len(row)), -row))
    ranks = np.empty(len(row), dtype=np.float64)
    ranks[order] = np.arange(1, len(row) + 1)
    return 1.0 / ranks


def _minmax_normalize(row: np.ndarray) -> np.ndarray:
    lo, hi = row.min(), row.max()
    if hi == lo:
        return np.full(len(row), 0.5)
    return (row - lo) / (hi - lo)


def normalize_scores(mset: ModelScoreSet, mode: str) -> ModelScoreSet:
    """Per-query rescaling: reciprocal rank, or affine map onto [0, 1].

    Rank ties resolve by earlier candidate-list position (the shared list is
    already ordered score-descending then entity-ascending); a constant row
    maps to all 0.5 under minmax.
    """
    if mode not in NORMALIZATIONS:
        raise ValueError(f"unknown normalization {mode!r}")
    fn = _rank_normalize if mode == "rank" else _minmax_normalize
    return ModelScoreSet(model_tag=mset.model_tag,
                         scores=[fn(row) if len(row) else row for row in mset.scores])


def _combined_lists(msets: list[ModelScoreSet], weights: np.ndarray,
                    candidates: list[CandidateList]) -> list[CandidateList]:
    out = []
    for qi, cl in enumerate(candidates):
        if len(cl) == 0:
            out.append(cl)
            continue
        total = np.zeros(len(cl), dtype=np.float64)
        for m, w in zip(msets, weights):
            if w:
                total += w * m.scores[qi]
        order = np.lexsort((cl.entities, -total))
        merged = CandidateList(head=cl.head, relation=cl.relation,
                               entities=cl.entities[order], scores=total[order],
                               cap=cl.cap,
                               sources=[cl.sources[i] for i in order] if cl.sources else [])
        out.append(merged)
    return out


def _ensemble_mrr(msets: list[ModelScoreSet], weights: np.ndarray,
                  candidates: list[CandidateList], dev: EvalSplit) -> float:
    return mrr_at_10(_combined_lists(msets, weights, candidates), dev)


def greedy_select_with_trace(models: list[ModelScoreSet],
                             candidates: list[CandidateList], dev: EvalSplit,
                             normalization: str = "rank",
                             max_selected: int = MAX_SELECTED,
                             ) -> tuple[list[str], list[float]]:
    """Equal-weight greedy model selection by dev MRR@10.

    Starts from the best single model, then repeatedly adds the model whose
    inclusion improves dev MRR@10 the most, stopping when no addition gives
    a strict improvement or the selection cap is reached. Ties prefer the
    lexicographically smaller tag. Returns the tags in acceptance order and
    the MRR after each accepted step (a non-decreasing trace).
    """
    if not models:
        raise ValueError("at least one score set required")
    tags = [m.model_tag for m in models]
    if len(set(tags)) != len(tags):
        raise ValueError("duplicate model tags")
    normalized = {m.model_tag: normalize_scores(m, normalization) for m in models}

    def subset_mrr(selected: list[str]) -> float:
        msets = [normalized[tag] for tag in selected]
        w = np.full(len(msets), 1.0 / len(msets))
        return _ensemble_mrr(msets, w, candidates, dev)

    best_tag = min(tags, key=lambda tag: (-subset_mrr([tag]), tag))
    selected = [best_tag]
    trace = [subset_mrr(selected)]
    while len(selected) < min(max_selected, len(tags)):
        remaining = sorted(set(tags) - set(selected))
        scored = [(subset_mrr(selected + [tag]), tag) for tag in remaining]
        best_mrr, tag = min(scored, key=lambda st: (-st[0], st[1]))
        if best_mrr <= trace[-1]:
            break
        selected.append(tag)
        trace.append(best_mrr)
    return selected, trace


def greedy_select(models: list[ModelScoreSet], candidates: list[CandidateList],
                  dev: EvalSplit, normalization: str = "rank") -> list[str]:
    return greedy_select_with_trace(models, candidates, dev, normalization)[0]


def _simplex_grid(m: int, units: int, strictly_positive: bool = False):
    """Weight compositions in lexicographic order (first model varies slowest)."""
    floor = 1 if strictly_positive else 0
    free = units - m * floor
    if free < 0:
        return
    for cuts in combinations_with_replacement(range(free + 1), m - 1):
        counts = []
        prev = 0
        for c in cuts:
            counts.append(c - prev)
            prev = c
        counts.append(free - prev)
        yield tuple(floor + c for c in counts)


def grid_points(m: int, units: int, strictly_positive: bool = False) -> int:
    free = units - m if strictly_positive else units
    if free < 0:
        return 0
    return math.comb(free + m - 1, m - 1)


def grid_search_weights(selected: list[ModelScoreSet],
                        candidates: list[CandidateList], dev: EvalSplit,
                        step: float = 0.1, normalization: str = "rank",
                        budget: int = DEFAULT_GRID_BUDGET,
                        strictly_positive: bool = False) -> EnsembleSpec:
    """Exhaustive dev-MRR search over the discretized weight simplex.

    The grid contains every composition of 1/step units over the selected
    models (including all unit corners); the first strict maximum wins, so
    ties resolve to the lexicographically smallest weight vector. A grid
    larger than ``budget`` raises with advice to coarsen the step.
    """
    if not 1 <= len(selected) <= MAX_SELECTED:
        raise ValueError(f"between 1 and {MAX_SELECTED} models supported")
    units = round(1.0 / step)
    if units < 1 or abs(units * step - 1.0) > 1e-9:
        raise ValueError("step must evenly divide 1")
    m = len(selected)
    n_points = grid_points(m, units, strictly_positive)
    if n_points > budget:
        raise ValueError(
            f"weight grid of {n_points} points exceeds budget {budget}; "
            "use a coarser step")
    if n_points == 0:
        raise ValueError("no grid points: too many models for a strictly positive grid")
    normalized = [normalize_scores(s, normalization) for s in selected]
    best_weights = None
    best_mrr = -1.0
    for counts in _simplex_grid(m, units, strictly_positive):
        w = np.asarray(counts, dtype=np.float64) / units
        mrr = _ensemble_mrr(normalized, w, candidates, dev)
        if mrr > best_mrr:
            best_mrr = mrr
            best_weights = w
    return EnsembleSpec(selected_models=tuple(s.model_tag for s in selected),
                        weights=tuple(best_weights.tolist()),
                        normalization=normalization)


def direct_ensemble(models: list[ModelScoreSet], candidates: list[CandidateList],
                    dev: EvalSplit, step: float = 0.1,
                    normalization: str = "rank",
                    budget: int = DEFAULT_GRID_BUDGET) -> EnsembleSpec:
    """Diagnostic: grid search over all models with strictly positive weights."""
    return grid_search_weights(models, candidates, dev, step=step,
                               normalization=normalization, budget=budget,
                               strictly_positive=True)


def ensemble_predict(spec: EnsembleSpec, models: list[ModelScoreSet],
                     candidates: list[CandidateList]) -> list[CandidateList]:
    """Final ranking: weighted sum of normalized scores per candidate."""
    by_tag = {m.model_tag: m for m in models}
    missing = [t for t in spec.selected_models if t not in by_tag]
    if missing:
        raise ValueError(f"score sets missing for models: {missing}")
    normalized = [normalize_scores(by_tag[t], spec.normalization)
                  for t in spec.selected_models]
    return _combined_lists(normalized, np.asarray(spec.weights), candidates)


def write_ensemble_spec(path, spec: EnsembleSpec) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"normalization {spec.normalization}\n")
        for tag, w in zip(spec.selected_models, spec.weights):
            fh.write(f"{tag} {w!r}\n")


def read_ensemble_spec(path) -> EnsembleSpec:
    normalization = None
    tags: list[str] = []
    weights: list[float] = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            stripped = line.strip()
            if not stripped or stripped.startswith("#"):
                continue
            parts = stripped.split()
            if parts[0] == "normalization" and len(parts) == 2:
                normalization = parts[1]
            elif len(parts) == 2:
                tags.append(parts[0])
                weights.append(float(parts[1]))
            else:
                raise ValueError(f"malformed ensemble spec line {lineno}")
    if normalization is None:
        raise ValueError("ensemble spec missing normalization line")
    return EnsembleSpec(selected_models=tuple(tags), weights=tuple(weights),
                        normalization=normalization)


def write_top10(path, lists: list[CandidateList]) -> None:
    """Submission-shaped output: per query, the top-10 entity ids."""
    with open(path, "w", encoding="utf-8") as fh:
        for cl in lists:
            ids = " ".join(str(int(e)) for e in cl.entities[:10])
            fh.write(f"{cl.head} {cl.relation} {ids}".rstrip() + "\n")
