"""Immutable triple store with CSR adjacency.

Triples are kept exactly as ingested (duplicates included, since downstream
co-occurrence counts are frequency ratios over the raw training set).
Adjacency is stored in two sorted CSR layouts, one per direction, so that
iteration order is deterministic regardless of input order.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


def _freeze(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class KnowledgeGraph:
    """Triple store with forward/backward adjacency and degree tables.

    Attributes:
        triples: (n, 3) int64 array in ingestion order, columns (h, r, t).
        out_indptr / out_rel / out_dst: CSR adjacency h -> (r, t),
            sorted by (r, t) within each head.
        in_indptr / in_rel / in_src: CSR adjacency t -> (r, h),
            sorted by (r, h) within each tail.
        entity_degree: in-degree + out-degree per entity (both directions).
        relation_freq: number of triples per relation.
    """

    num_entities: int
    num_relations: int
    triples: np.ndarray
    out_indptr: np.ndarray
    out_rel: np.ndarray
    out_dst: np.ndarray
    in_indptr: np.ndarray
    in_rel: np.ndarray
    in_src: np.ndarray
    entity_degree: np.ndarray
    relation_freq: np.ndarray

    @property
    def num_triples(self) -> int:
        return int(self.triples.shape[0])

    @classmethod
    def from_triples(cls, triples, num_entities: int, num_relations: int) -> "KnowledgeGraph":
        """Build the graph from an (n, 3) integer array of (h, r, t) rows."""
        t = np.ascontiguousarray(triples, dtype=np.int64)
        if t.ndim != 2 or t.shape[1] != 3:
            raise ValueError("triples must be an (n, 3) array")
        if t.shape[0] == 0:
            raise ValueError("empty file: no triples to ingest")
        h, r, tl = t[:, 0], t[:, 1], t[:, 2]
        if h.min() < 0 or tl.min() < 0 or max(h.max(), tl.max()) >= num_entities:
            raise ValueError("id out of range: entity id outside [0, num_entities)")
        if r.min() < 0 or r.max() >= num_relations:
            raise ValueError("id out of range: relation id outside [0, num_relations)")

        out_order = np.lexsort((tl, r, h))
        in_order = np.lexsort((h, r, tl))
        out_counts = np.bincount(h, minlength=num_entities)
        in_counts = np.bincount(tl, minlength=num_entities)
        out_indptr = np.zeros(num_entities + 1, dtype=np.int64)
        in_indptr = np.zeros(num_entities + 1, dtype=np.int64)
        np.cumsum(out_counts, out=out_indptr[1:])
        np.cumsum(in_counts, out=in_indptr[1:])

        return cls(
            num_entities=num_entities,
            num_relations=num_relations,
            triples=_freeze(t),
            out_indptr=_freeze(out_indptr),
            out_rel=_freeze(r[out_order].copy()),
            out_dst=_freeze(tl[out_order].copy()),
            in_indptr=_freeze(in_indptr),
            in_rel=_freeze(r[in_order].copy()),
            in_src=_freeze(h[in_order].copy()),
            entity_degree=_freeze(out_counts + in_counts),
            relation_freq=_freeze(np.bincount(r, minlength=num_relations)),
        )

    def _check_entity(self, e: int) -> None:
        if not 0 <= e < self.num_entities:
            raise ValueError(f"entity id {e} out of range")

    def _out_slice(self, e: int):
        lo, hi = self.out_indptr[e], self.out_indptr[e + 1]
        return self.out_rel[lo:hi], self.out_dst[lo:hi]

    def _in_slice(self, e: int):
        lo, hi = self.in_indptr[e], self.in_indptr[e + 1]
        return self.in_rel[lo:hi], self.in_src[lo:hi]

    def neighbors(self, e: int, direction: str = "both") -> list[tuple[int, int]]:
        """Deduplicated (relation, neighbor) pairs of ``e``, sorted by (r, neighbor).

        ``direction`` is one of "out", "in", "both"; "both" merges the two
        adjacency lists before deduplication.
        """
        self._check_entity(e)
        if direction == "out":
            rel, nbr = self._out_slice(e)
        elif direction == "in":
            rel, nbr = self._in_slice(e)
        elif direction == "both":
            ro, no = self._out_slice(e)
            ri, ni = self._in_slice(e)
            rel = np.concatenate([ro, ri])
            nbr = np.concatenate([no, ni])
        else:
            raise ValueError(f"unknown direction {direction!r}")
        if rel.size == 0:
            return []
        order = np.lexsort((nbr, rel))
        rel, nbr = rel[order], nbr[order]
        keep = np.ones(rel.size, dtype=bool)
        keep[1:] = (rel[1:] != rel[:-1]) | (nbr[1:] != nbr[:-1])
        return list(zip(rel[keep].tolist(), nbr[keep].tolist()))

    def neighbor_entities(self, e: int) -> np.ndarray:
        """Unique first-order neighbor entity ids of ``e`` (both directions)."""
        self._check_entity(e)
        _, no = self._out_slice(e)
        _, ni = self._in_slice(e)
        return np.unique(np.concatenate([no, ni]))

    def sample_neighbors(self, e: int, n: int, seed: int) -> list[tuple[int, int]]:
        """Uniform sample without replacement from the neighbor list of ``e``.

        Returns the full (deduplicated, both-direction) neighbor list when it
        has at most ``n`` entries. Deterministic for a fixed seed; the entity
        id is mixed into the stream so different entities draw independently.
        """
        if n < 1:
            raise ValueError("sample size must be >= 1")
        pairs = self.neighbors(e, "both")
        if len(pairs) <= n:
            return pairs
        rng = np.random.default_rng((seed, e))
        idx = rng.choice(len(pairs), size=n, replace=False)
        idx.sort()
        return [pairs[i] for i in idx]


def ingest_triples(triple_file, num_entities: int, num_relations: int) -> KnowledgeGraph:
    """Parse a whitespace-separated "h r t" file into a KnowledgeGraph.

    Lines starting with '#' and blank lines are ignored. Malformed lines and
    out-of-range ids are reported with their 1-based line number.
    """
    rows = []
    with open(triple_file, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            stripped = line.strip()
            if not stripped or stripped.startswith("#"):
                continue
            parts = stripped.split()
            if len(parts) != 3:
                raise ValueError(f"malformed line {lineno}: expected 3 fields, got {len(parts)}")
            try:
                h, r, t = int(parts[0]), int(parts[1]), int(parts[2])
            except ValueError:
                raise ValueError(f"malformed line {lineno}: non-integer field") from None
            if not (0 <= h < num_entities and 0 <= t < num_entities):
                raise ValueError(f"id out of range at line {lineno}")
            if not 0 <= r < num_relations:
                raise ValueError(f"id out of range at line {lineno}")
            rows.append((h, r, t))
    if not rows:
        raise ValueError("empty file: no triples to ingest")
    return KnowledgeGraph.from_triples(np.asarray(rows, dtype=np.int64), num_entities, num_relations)


def load_vocab(path) -> list[str]:
    """Read a vocabulary file: one label per line, line number = id."""
    with open(path, "r", encoding="utf-8") as fh:
        return [line.rstrip("\n") for line in fh]
