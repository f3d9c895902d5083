"""Product-quantized k-NN over feature vectors.

Vectors are split into equal subspaces; each subspace gets its own k-means
codebook and every row is stored as one centroid code per subspace. Queries
are kept exact and compared against reconstructed rows (asymmetric distance)
through per-subspace squared-distance lookup tables.

Semantic candidate retrieval ranks entity rows by Euclidean distance to the
query relation's feature vector; the tail list does not depend on the head.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .candidates import CandidateList
from .features import FeatureMatrix


@dataclass(frozen=True)
class PQIndex:
    num_subspaces: int
    centroids_per_subspace: int
    codebooks: np.ndarray
    codes: np.ndarray
    trained_on_dim: int

    def __post_init__(self):
        m, k, sub = self.codebooks.shape
        if m != self.num_subspaces or k != self.centroids_per_subspace:
            raise ValueError("codebook shape does not match index parameters")
        if self.trained_on_dim != m * sub:
            raise ValueError("trained dimension not divisible into subspaces")
        if not np.isfinite(self.codebooks).all():
            raise ValueError("non-finite codebook entry")
        if self.codes.ndim != 2 or self.codes.shape[1] != m:
            raise ValueError("codes must be one column per subspace")
        if self.codes.size and int(self.codes.max()) >= k:
            raise ValueError("code exceeds centroid count")

    @property
    def num_rows(self) -> int:
        return self.codes.shape[0]

    @property
    def subspace_dim(self) -> int:
        return self.trained_on_dim // self.num_subspaces


def _assign(x: np.ndarray, centers: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    d2 = ((x[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
    assign = d2.argmin(axis=1)
    return assign, d2[np.arange(x.shape[0]), assign]


def _kmeans(x: np.ndarray, k: int, iters: int, rng: np.random.Generator) -> np.ndarray:
    """Lloyd iterations with a fixed budget; deterministic for a given rng."""
    n = x.shape[0]
    centers = x[np.sort(rng.choice(n, size=k, replace=False))].copy()
    for _ in range(iters):
        assign, _ = _assign(x, centers)
        counts = np.bincount(assign, minlength=k).astype(np.float64)
        sums = np.zeros_like(centers)
        np.add.at(sums, assign, x)
        nonempty = counts > 0
        centers[nonempty] = sums[nonempty] / counts[nonempty, None]
        empty = np.nonzero(~nonempty)[0]
        if empty.size:
            d2 = ((x - centers[assign]) ** 2).sum(axis=1)
            for c in empty:
                far = int(d2.argmax())
                centers[c] = x[far]
                d2[far] = -np.inf
    return centers


def train_pq(features: FeatureMatrix, num_subspaces: int = 64,
             centroids: int = 64, iters: int = 25, seed: int = 0) -> PQIndex:
    """Fit one k-means codebook per subspace and encode every row."""
    rows, dim = features.num_rows, features.dim
    if dim % num_subspaces != 0:
        raise ValueError(f"dim {dim} not divisible by {num_subspaces} subspaces")
    if rows < centroids:
        raise ValueError(f"{rows} rows cannot support {centroids} centroids")
    sub = dim // num_subspaces
    data = features.vectors.astype(np.float64).reshape(rows, num_subspaces, sub)
    codebooks = np.empty((num_subspaces, centroids, sub), dtype=np.float64)
    code_dtype = np.uint8 if centroids <= 256 else np.uint16
    codes = np.empty((rows, num_subspaces), dtype=code_dtype)
    for m in range(num_subspaces):
        rng = np.random.default_rng((seed, m))
        centers = _kmeans(data[:, m, :], centroids, iters, rng)
        codebooks[m] = centers
        codes[:, m], _ = _assign(data[:, m, :], centers)
    codebooks.setflags(write=False)
    codes.setflags(write=False)
    return PQIndex(num_subspaces=num_subspaces, centroids_per_subspace=centroids,
                   codebooks=codebooks, codes=codes, trained_on_dim=dim)


def pq_knn(index: PQIndex, query: np.ndarray, k: int) -> list[tuple[int, float]]:
    """Nearest rows by asymmetric PQ distance, ties by ascending row id."""
    query = np.asarray(query, dtype=np.float64).ravel()
    if query.shape[0] != index.trained_on_dim:
        raise ValueError(f"query dim {query.shape[0]} != index dim {index.trained_on_dim}")
    if k < 1:
        raise ValueError("k must be >= 1")
    qs = query.reshape(index.num_subspaces, index.subspace_dim)
    tables = ((index.codebooks - qs[:, None, :]) ** 2).sum(axis=2)
    d2 = tables[np.arange(index.num_subspaces)[None, :], index.codes].sum(axis=1)
    dist = np.sqrt(np.maximum(d2, 0.0))
    order = np.argsort(dist, kind="stable")[: min(k, index.num_rows)]
    return [(int(i), float(dist[i])) for i in order]


def reconstruct(index: PQIndex, row: int) -> np.ndarray:
    parts = index.codebooks[np.arange(index.num_subspaces), index.codes[row]]
    return parts.reshape(index.trained_on_dim)


def semantic_retrieve(index: PQIndex, relation_features: FeatureMatrix, r: int,
                      k: int, head: int = -1, source: str = "semantic") -> CandidateList:
    """k nearest entity rows to the relation vector, scored as -distance."""
    if not 0 <= r < relation_features.num_rows:
        raise ValueError(f"relation id {r} out of range")
    if relation_features.dim != index.trained_on_dim:
        raise ValueError("relation features and index dimensions differ")
    hits = pq_knn(index, relation_features.row(r), k)
    ents = [e for e, _ in hits]
    scores = [-d for _, d in hits]
    return CandidateList.from_scores(head, r, ents, scores, cap=k, source=source)
