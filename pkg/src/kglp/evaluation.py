"""Dev-split carving and ranking metrics.

The dev split is carved deterministically by hashing each (head, relation)
pair, so every triple sharing a query lands on the same side and the split
is stable across platforms and runs. Metrics operate on per-query candidate
lists aligned with an EvalSplit.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import numpy as np

from .candidates import CandidateList


@dataclass(frozen=True)
class EvalSplit:
    """Tail-prediction queries with exactly one answer per query instance.

    A (h, r) pair with several true tails appears as several query
    instances; ``known_tails`` carries every true tail per (h, r) across the
    whole dataset so metrics can filter other correct answers when ranking.
    """

    queries: tuple[tuple[int, int], ...]
    answers: tuple[int, ...]
    known_tails: dict[tuple[int, int], frozenset[int]] = field(default_factory=dict)

    def __post_init__(self):
        if len(self.queries) != len(self.answers):
            raise ValueError("one answer required per query")

    def __len__(self) -> int:
        return len(self.queries)


def _query_hash(h: int, r: int, seed: int) -> float:
    """Uniform [0, 1) value derived from a stable cross-platform hash."""
    digest = hashlib.blake2b(f"{h}:{r}:{seed}".encode(), digest_size=8).digest()
    return int.from_bytes(digest, "big") / 2.0**64


def carve_dev_split(triples: np.ndarray, dev_ratio: float,
                    seed: int) -> tuple[np.ndarray, EvalSplit]:
    """Split triples into (training triples, dev EvalSplit) by query hash.

    Every triple whose (h, r) hashes below ``dev_ratio`` becomes a dev query
    instance; the rest remain for training. known_tails indexes all tails in
    the full input, so evaluation can filter true answers either side knows.
    """
    if not 0 < dev_ratio < 1:
        raise ValueError("dev_ratio must be in (0, 1)")
    triples = np.asarray(triples, dtype=np.int64)
    is_dev = np.fromiter(
        (_query_hash(int(h), int(r), seed) < dev_ratio for h, r, _ in triples),
        dtype=bool, count=len(triples))
    if is_dev.all():
        raise ValueError("dev split would consume every triple")
    known: dict[tuple[int, int], set[int]] = {}
    for h, r, t in triples:
        known.setdefault((int(h), int(r)), set()).add(int(t))
    dev = triples[is_dev]
    split = EvalSplit(
        queries=tuple((int(h), int(r)) for h, r, _ in dev),
        answers=tuple(int(t) for _, _, t in dev),
        known_tails={q: frozenset(s) for q, s in known.items()})
    return triples[~is_dev], split


def _check_aligned(candidates: list[CandidateList], dev: EvalSplit) -> None:
    if len(candidates) != len(dev):
        raise ValueError("candidate lists not aligned with dev queries")


def recall_at_cap(candidates: list[CandidateList], dev: EvalSplit) -> float:
    """Fraction of dev queries whose true tail appears in its list."""
    _check_aligned(candidates, dev)
    if not dev.queries:
        return 0.0
    hits = sum(1 for cl, t in zip(candidates, dev.answers) if cl.rank_of(t) > 0)
    return hits / len(dev)


def model_accuracy(candidates: list[CandidateList], dev: EvalSplit) -> float:
    """Dev hits divided by total candidates emitted (pooled over queries)."""
    _check_aligned(candidates, dev)
    hits = sum(1 for cl, t in zip(candidates, dev.answers) if cl.rank_of(t) > 0)
    emitted = sum(len(cl) for cl in candidates)
    return hits / emitted if emitted else 0.0


def per_query_accuracy(candidates: list[CandidateList], dev: EvalSplit) -> float:
    """Diagnostic variant: mean over queries of hit / list length."""
    _check_aligned(candidates, dev)
    vals = [(1.0 if cl.rank_of(t) > 0 else 0.0) / len(cl)
            for cl, t in zip(candidates, dev.answers) if len(cl)]
    return float(np.mean(vals)) if vals else 0.0


def filtered_rank(cl: CandidateList, answer: int,
                  known: frozenset[int] | None) -> int:
    """1-based rank of ``answer`` skipping other known-true tails; 0 if absent."""
    rank = 0
    for e in cl.entities:
        e = int(e)
        if e == answer:
            return rank + 1
        if known is None or e not in known:
            rank += 1
    return 0


def mrr_at_10(candidates: list[CandidateList], dev: EvalSplit,
              filtered: bool = True) -> float:
    """Mean over queries of 1/rank when the answer ranks in the top 10.

    With ``filtered`` set, other true tails of the same (h, r) (from
    dev.known_tails) are skipped before ranks are counted, so correct
    answers never push each other out of the cutoff.
    """
    _check_aligned(candidates, dev)
    if not dev.queries:
        return 0.0
    total = 0.0
    for cl, q, t in zip(candidates, dev.queries, dev.answers):
        known = dev.known_tails.get(q) if filtered else None
        rank = filtered_rank(cl, t, known)
        if 0 < rank <= 10:
            total += 1.0 / rank
    return total / len(dev)
