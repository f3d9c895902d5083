"""Path-rule candidate retrieval from sparse co-occurrence counts.

Eleven walking-path rules score candidate tails by co-occurrence frequency
ratios. Five entity-to-entity rules condition on the query head and ignore
the relation; six relation-to-entity rules condition on the query relation
and ignore the head.

Each rule is a product of "leg" frequencies. A leg is the conditional
frequency of its free element given its bound element:

    HT(x, y) = count(x,*,y) / count(x,*,*)   forward step from x
    TH(x, y) = count(y,*,x) / count(*,*,x)   reverse step from x
    RT(r, t) = count(*,r,t) / count(*,r,*)   typical tails of r
    RH(r, h) = count(h,r,*) / count(*,r,*)   typical heads of r
    HR(e, r) = count(e,r,*) / count(e,*,*)   typical outgoing relations of e
    TR(e, r) = count(*,r,e) / count(*,*,e)   typical incoming relations of e

Composite rules sum the leg products over all intermediate entities or
(entity, relation) pairs, e.g.

    TH-HT(h, t)    = sum_e1 TH(e1, h) * HT(e1, t)
    RT-HR-RT(r, t) = sum_{e1,r1} RT(r, e1) * HR(e1, r1) * RT(r1, t)

which are sparse vector-matrix chains over the leg matrices, so composite
scores never iterate the full entity set.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .candidates import CandidateList
from .graph import KnowledgeGraph

ENTITY_RULES = ("HT", "TH", "TH-TH", "HT-HT", "TH-HT")
RELATION_RULES = ("RT", "RH", "RT-TR-RT", "RT-HR-RT", "RH-HR-RT", "RH-TR-RT")
RULES = ENTITY_RULES + RELATION_RULES


@dataclass
class CountTables:
    """Sparse co-occurrence counts over the raw triple multiset.

    ``ht[h, t] = count(h,*,t)``, ``rt[r, t] = count(*,r,t)``,
    ``hr[h, r] = count(h,r,*)``; marginals are row/column sums of those.
    Only strictly positive counts are stored.
    """

    num_entities: int
    num_relations: int
    ht: sp.csr_matrix
    rt: sp.csr_matrix
    hr: sp.csr_matrix
    cnt_h: np.ndarray
    cnt_t: np.ndarray
    cnt_r: np.ndarray
    _engine: "RuleEngine | None" = field(default=None, repr=False)

    def cnt_h_t(self, h: int, t: int) -> float:
        return float(self.ht[h, t])

    def cnt_r_t(self, r: int, t: int) -> float:
        return float(self.rt[r, t])

    def cnt_r_h(self, r: int, h: int) -> float:
        """count(h,r,*): triples where h heads relation r."""
        return float(self.hr[h, r])

    # same count keyed the other way round, for HR/TR leg call sites
    def cnt_e_r(self, e: int, r: int) -> float:
        return float(self.hr[e, r])


def build_count_tables(kg: KnowledgeGraph) -> CountTables:
    """Accumulate the sparse count tables from a built graph."""
    h, r, t = kg.triples[:, 0], kg.triples[:, 1], kg.triples[:, 2]
    ones = np.ones(kg.num_triples, dtype=np.float64)
    e, nr = kg.num_entities, kg.num_relations
    ht = sp.coo_matrix((ones, (h, t)), shape=(e, e)).tocsr()
    rt = sp.coo_matrix((ones, (r, t)), shape=(nr, e)).tocsr()
    hr = sp.coo_matrix((ones, (h, r)), shape=(e, nr)).tocsr()
    for m in (ht, rt, hr):
        m.sum_duplicates()
        m.sort_indices()
    return CountTables(
        num_entities=e,
        num_relations=nr,
        ht=ht, rt=rt, hr=hr,
        cnt_h=np.asarray(ht.sum(axis=1)).ravel(),
        cnt_t=np.asarray(ht.sum(axis=0)).ravel(),
        cnt_r=np.asarray(rt.sum(axis=1)).ravel(),
    )


def _row_normalize(mat: sp.csr_matrix, denom: np.ndarray) -> sp.csr_matrix:
    """Divide each row by its denominator; rows with zero denominator stay empty."""
    out = mat.tocsr().astype(np.float64, copy=True)
    safe = np.where(denom > 0, denom, 1.0)
    row_ids = np.repeat(np.arange(out.shape[0]), np.diff(out.indptr))
    out.data = out.data / safe[row_ids]
    out.sort_indices()
    return out


class RuleEngine:
    """Leg matrices plus a per-query score-row cache.

    ``rule_score`` and ``retrieve_by_rule`` both read rows from this cache,
    so a single-triple score and the same triple's entry in a retrieved list
    are bitwise identical.
    """

    def __init__(self, tables: CountTables, cache_size: int = 256):
        self.tables = tables
        ht_t = tables.ht.T.tocsr()
        self.ht_leg = _row_normalize(tables.ht, tables.cnt_h)          # HT(x, y)
        self.th_leg = _row_normalize(ht_t, tables.cnt_t)               # TH(x, y)
        self.ht_leg_T = self.ht_leg.T.tocsr()
        self.th_leg_T = self.th_leg.T.tocsr()
        self.rt_leg = _row_normalize(tables.rt, tables.cnt_r)          # RT(r, t)
        self.rh_leg = _row_normalize(tables.hr.T.tocsr(), tables.cnt_r)  # RH(r, h)
        self.hr_leg = _row_normalize(tables.hr, tables.cnt_h)          # HR(e, r)
        self.tr_leg = _row_normalize(tables.rt.T.tocsr(), tables.cnt_t)  # TR(e, r)
        self._cache: dict[tuple[str, int], tuple[np.ndarray, np.ndarray]] = {}
        self._cache_size = cache_size

    def _query_key(self, rule: str, h: int, r: int) -> tuple[str, int]:
        return (rule, h) if rule in ENTITY_RULES else (rule, r)

    def _compute_row(self, rule: str, key: int) -> sp.csr_matrix:
        if rule == "HT":
            return self.ht_leg[key]
        if rule == "TH":
            return self.th_leg[key]
        if rule == "TH-TH":
            return self.th_leg_T[key] @ self.th_leg
        if rule == "HT-HT":
            return self.ht_leg_T[key] @ self.ht_leg
        if rule == "TH-HT":
            return self.th_leg_T[key] @ self.ht_leg
        if rule == "RT":
            return self.rt_leg[key]
        if rule == "RH":
            return self.rh_leg[key]
        if rule == "RT-TR-RT":
            return (self.rt_leg[key] @ self.tr_leg) @ self.rt_leg
        if rule == "RT-HR-RT":
            return (self.rt_leg[key] @ self.hr_leg) @ self.rt_leg
        if rule == "RH-HR-RT":
            return (self.rh_leg[key] @ self.hr_leg) @ self.rt_leg
        if rule == "RH-TR-RT":
            return (self.rh_leg[key] @ self.tr_leg) @ self.rt_leg
        raise ValueError(f"unknown rule {rule!r}")

    def score_row(self, rule: str, h: int, r: int) -> tuple[np.ndarray, np.ndarray]:
        """Sparse score row for a query: (entity ids, scores), ids ascending."""
        cache_key = self._query_key(rule, h, r)
        hit = self._cache.get(cache_key)
        if hit is not None:
            return hit
        row = self._compute_row(rule, cache_key[1]).tocsr()
        row.sort_indices()
        idx = row.indices.astype(np.int64)
        vals = row.data.astype(np.float64)
        keep = vals > 0
        entry = (idx[keep], vals[keep])
        if len(self._cache) >= self._cache_size:
            self._cache.pop(next(iter(self._cache)))
        self._cache[cache_key] = entry
        return entry

    def score(self, rule: str, h: int, r: int, t: int) -> float:
        idx, vals = self.score_row(rule, h, r)
        pos = np.searchsorted(idx, t)
        if pos < idx.size and idx[pos] == t:
            return float(vals[pos])
        return 0.0

    def retrieve(self, rule: str, h: int, r: int, cap: int) -> CandidateList:
        idx, vals = self.score_row(rule, h, r)
        return CandidateList.from_scores(h, r, idx, vals, cap, source=f"rule-{rule}")


def _engine_for(tables: CountTables) -> RuleEngine:
    if tables._engine is None:
        tables._engine = RuleEngine(tables)
    return tables._engine


def rule_score(tables: CountTables, rule: str, h: int, r: int, t: int) -> float:
    """Co-occurrence score of a single (h, r, t) under one rule.

    Returns 0 whenever any leg denominator is empty: missing counts simply
    never enter the sparse products, so no explicit division guard fires.
    """
    if rule not in RULES:
        raise ValueError(f"unknown rule {rule!r}")
    return _engine_for(tables).score(rule, h, r, t)


def retrieve_by_rule(tables: CountTables, rule: str, h: int, r: int, cap: int) -> CandidateList:
    """All tails with nonzero rule score, ranked and truncated to ``cap``.

    Entity-to-entity rules ignore ``r``; relation-to-entity rules ignore
    ``h``. An empty list is a valid result.
    """
    if rule not in RULES:
        raise ValueError(f"unknown rule {rule!r}")
    if cap < 1:
        raise ValueError("cap must be >= 1")
    return _engine_for(tables).retrieve(rule, h, r, cap)
