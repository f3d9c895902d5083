"""Ranked candidate lists shared by every retrieval and re-ranking stage."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass
class CandidateList:
    """Per-query ranked tail candidates.

    Entries are kept as parallel arrays sorted by score descending with ties
    broken by ascending entity id; entities are unique and the list never
    exceeds ``cap``. ``sources`` records which model produced each entry.
    """

    head: int
    relation: int
    entities: np.ndarray
    scores: np.ndarray
    cap: int
    sources: list[str] = field(default_factory=list)
    retrieval_scores: np.ndarray | None = None

    def __len__(self) -> int:
        return int(self.entities.shape[0])

    @classmethod
    def from_scores(cls, head: int, relation: int, entities, scores, cap: int,
                    source: str = "") -> "CandidateList":
        """Sort (entity, score) pairs into a valid list and truncate to ``cap``.

        Entities must be unique; scores are taken as-is (no filtering).
        """
        if cap < 1:
            raise ValueError("cap must be >= 1")
        ent = np.asarray(entities, dtype=np.int64)
        sc = np.asarray(scores, dtype=np.float64)
        if ent.shape != sc.shape:
            raise ValueError("entities and scores must be the same length")
        order = np.lexsort((ent, -sc))[:cap]
        ent, sc = ent[order], sc[order]
        return cls(head=head, relation=relation, entities=ent, scores=sc,
                   cap=cap, sources=[source] * len(ent))

    def validate(self) -> None:
        """Raise if any structural invariant is violated."""
        if len(self) > self.cap:
            raise ValueError("candidate list longer than cap")
        if len(np.unique(self.entities)) != len(self):
            raise ValueError("duplicate entities in candidate list")
        if len(self) > 1:
            s, e = self.scores, self.entities
            ok = (s[:-1] > s[1:]) | ((s[:-1] == s[1:]) & (e[:-1] < e[1:]))
            if not ok.all():
                raise ValueError("entries not sorted by (score desc, entity asc)")
        if self.sources and len(self.sources) != len(self):
            raise ValueError("sources length mismatch")
        if self.retrieval_scores is not None and len(self.retrieval_scores) != len(self):
            raise ValueError("retrieval score provenance length mismatch")

    def rank_of(self, entity: int) -> int:
        """1-based rank of ``entity`` in this list, or 0 if absent."""
        pos = np.nonzero(self.entities == entity)[0]
        return int(pos[0]) + 1 if pos.size else 0


def write_candidate_lists(path, lists: list[CandidateList], header: str = "") -> None:
    """Write lists as text: ``h r t1:s1[:src] t2:s2[:src] ...`` one query per line.

    Scores use ``repr`` so a read round-trips to the identical float. An
    optional header is emitted as a leading comment line.
    """
    with open(path, "w", encoding="utf-8") as fh:
        if header:
            fh.write(f"# {header}\n")
        for cl in lists:
            toks = [str(cl.head), str(cl.relation)]
            for i in range(len(cl)):
                tok = f"{int(cl.entities[i])}:{float(cl.scores[i])!r}"
                if cl.sources and cl.sources[i]:
                    tok += f":{cl.sources[i]}"
                toks.append(tok)
            fh.write(" ".join(toks) + "\n")


def read_candidate_lists(path, cap: int) -> list[CandidateList]:
    """Read the text candidate format produced by :func:`write_candidate_lists`."""
    out = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip() or line.lstrip().startswith("#"):
                continue
            parts = line.split()
            if len(parts) < 2:
                raise ValueError(f"malformed candidate line {lineno}")
            head, relation = int(parts[0]), int(parts[1])
            ents, scores, sources = [], [], []
            for tok in parts[2:]:
                fields = tok.split(":")
                if len(fields) not in (2, 3):
                    raise ValueError(f"malformed candidate token at line {lineno}: {tok!r}")
                ents.append(int(fields[0]))
                scores.append(float(fields[1]))
                sources.append(fields[2] if len(fields) == 3 else "")
            cl = CandidateList(
                head=head, relation=relation,
                entities=np.asarray(ents, dtype=np.int64),
                scores=np.asarray(scores, dtype=np.float64),
                cap=cap, sources=sources)
            cl.validate()
            out.append(cl)
    return out
