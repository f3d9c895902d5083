"""Accuracy-ranked fusion of candidate lists by priority infilling.

Each retrieval model is scored on the dev split (recall within its cap and
pooled accuracy = hits / candidates emitted); models are ordered by accuracy
and their per-query lists merged highest-priority-first, appending unseen
entities until the fused cap is reached. Fused entries carry synthetic
positional scores 1/(position+1) so the shared sort invariant (descending
score) encodes the infill order, and per-entry source tags record which
model contributed each candidate.

A majority-voting merge is provided as a comparison baseline only.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .candidates import CandidateList
from .evaluation import EvalSplit, model_accuracy, recall_at_cap


@dataclass(frozen=True)
class RetrievalModelReport:
    model_tag: str
    recall_at_cap: float
    accuracy: float
    priority_rank: int

    def __post_init__(self):
        if not 0 <= self.recall_at_cap <= 1 or not 0 <= self.accuracy <= 1:
            raise ValueError("recall and accuracy must lie in [0, 1]")


def build_reports(per_model: dict[str, list[CandidateList]],
                  dev: EvalSplit) -> list[RetrievalModelReport]:
    """Score every retrieval model and assign 1-based priority ranks."""
    if not per_model:
        raise ValueError("no retrieval models to report on")
    stats = {tag: (recall_at_cap(lists, dev), model_accuracy(lists, dev))
             for tag, lists in per_model.items()}
    order = sorted(stats, key=lambda tag: (-stats[tag][1], tag))
    return [RetrievalModelReport(model_tag=tag, recall_at_cap=stats[tag][0],
                                 accuracy=stats[tag][1], priority_rank=i + 1)
            for i, tag in enumerate(order)]


def priority_order(reports: list[RetrievalModelReport]) -> list[str]:
    """Model tags by descending accuracy, ties broken lexicographically."""
    return [r.model_tag for r in sorted(reports, key=lambda r: (-r.accuracy, r.model_tag))]


def _positional(head: int, relation: int, entities: list[int],
                sources: list[str], n: int) -> CandidateList:
    ents = np.asarray(entities, dtype=np.int64)
    scores = 1.0 / (np.arange(len(entities), dtype=np.float64) + 1.0)
    cl = CandidateList(head=head, relation=relation, entities=ents,
                       scores=scores, cap=n, sources=sources)
    cl.validate()
    return cl


def priority_infill(ordered_lists: list[CandidateList], n: int) -> CandidateList:
    """Merge per-model lists for one query, highest priority first.

    Takes all of the first list, then entities of the second not already
    present, and so on, stopping at ``n``. Within-model order is preserved
    and each entry keeps the tag of the list that contributed it. The result
    may be shorter than ``n``.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    if not ordered_lists:
        raise ValueError("at least one candidate list required")
    head, relation = ordered_lists[0].head, ordered_lists[0].relation
    for cl in ordered_lists:
        if (cl.head, cl.relation) != (head, relation):
            raise ValueError("all lists must answer the same query")
    seen: set[int] = set()
    entities: list[int] = []
    sources: list[str] = []
    for cl in ordered_lists:
        for i in range(len(cl)):
            e = int(cl.entities[i])
            if e in seen:
                continue
            seen.add(e)
            entities.append(e)
            sources.append(cl.sources[i] if cl.sources else "")
            if len(entities) == n:
                return _positional(head, relation, entities, sources, n)
    return _positional(head, relation, entities, sources, n)


def majority_vote_merge(lists: list[CandidateList], n: int) -> CandidateList:
    """Baseline merge: rank by vote count, then best within-model rank.

    Candidates are ordered by (number of lists containing them descending,
    best rank across lists ascending, entity id ascending) and truncated to
    ``n``; like the infilled list, entries get positional scores.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    if not lists:
        raise ValueError("at least one candidate list required")
    head, relation = lists[0].head, lists[0].relation
    votes: dict[int, int] = {}
    best_rank: dict[int, int] = {}
    for cl in lists:
        if (cl.head, cl.relation) != (head, relation):
            raise ValueError("all lists must answer the same query")
        for pos, e in enumerate(cl.entities, start=1):
            e = int(e)
            votes[e] = votes.get(e, 0) + 1
            if e not in best_rank or pos < best_rank[e]:
                best_rank[e] = pos
    ranked = sorted(votes, key=lambda e: (-votes[e], best_rank[e], e))[:n]
    return _positional(head, relation, ranked, ["vote"] * len(ranked), n)


def infill_all(per_model: dict[str, list[CandidateList]], order: list[str],
               n: int) -> list[CandidateList]:
    """Apply priority_infill query-by-query across aligned model lists."""
    missing = [tag for tag in order if tag not in per_model]
    if missing:
        raise ValueError(f"unknown model tags in priority order: {missing}")
    num_queries = {len(lists) for lists in per_model.values()}
    if len(num_queries) != 1:
        raise ValueError("models disagree on the number of queries")
    return [priority_infill([per_model[tag][qi] for tag in order], n)
            for qi in range(num_queries.pop())]


def write_retrieval_report(path, reports: list[RetrievalModelReport]) -> None:
    """Text table, one row per model: tag, recall, accuracy, priority."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"{'model_tag':<24} {'recall':>12} {'accuracy':>12} {'priority':>8}\n")
        for r in sorted(reports, key=lambda r: r.priority_rank):
            fh.write(f"{r.model_tag:<24} {r.recall_at_cap:>12.6f} "
                     f"{r.accuracy:>12.6f} {r.priority_rank:>8}\n")
