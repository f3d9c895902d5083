"""Trainable embedding models for triple scoring.

Three scoring families share one entity-embedding front end:

- translation: score = gamma - ||e_h + w_r - e_t||
- hermitian product: score = sum Re(w_r * e_h * conj(e_t)), embeddings
  stored as concatenated real and imaginary halves
- grouped orthogonal transform: per group i, the relation block M_r(i) is
  column-orthonormalized by Gram-Schmidt, the head group is rotated and
  rescaled by the exponential weight vector, normalized so its largest
  entry is 1 (a zero weight vector scales by identity), and the score is
  gamma minus the summed group distances to the tail. The reverse direction
  applies the transposed rotation and negated weights to the tail.

Entity embeddings come from a configurable source: a free trainable table,
a feature matrix, or the feature matrix aggregated over first-order graph
neighbors; optionally passed with a free vector through one linear layer
(the trainable entity encoder).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch
from torch import nn

from ..features import FeatureMatrix
from ..graph import KnowledgeGraph
from ..candidates import CandidateList

KINDS = ("TransE", "ComplEx", "NOTE")
INIT_MODES = ("random", "feature", "neighbor_enhanced")
ACTIVATIONS = ("none", "relu")

_S_CLAMP = 10.0
_RANK_TOL = 1e-8


@dataclass(frozen=True)
class EmbeddingInit:
    """How entity embeddings are initialized and (optionally) encoded."""

    mode: str = "random"
    features: FeatureMatrix | None = None
    projection: bool = False
    activation: str = "none"

    def __post_init__(self):
        if self.mode not in INIT_MODES:
            raise ValueError(f"unknown init mode {self.mode!r}")
        if self.mode != "random" and self.features is None:
            raise ValueError(f"init mode {self.mode!r} requires a feature matrix")
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")


def neighbor_enhanced_init(kg: KnowledgeGraph, features: FeatureMatrix) -> FeatureMatrix:
    """Aggregate each entity's first-order neighbor features by summation.

    Row x = sum over the unique entities adjacent to x (either direction) of
    their feature rows; isolated entities get zero rows. Summation order is
    fixed by ascending neighbor id, so neighbor permutations cannot change
    the result.
    """
    if features.num_rows < kg.num_entities:
        raise ValueError("feature matrix must cover all entities")
    out = np.zeros((kg.num_entities, features.dim), dtype=np.float32)
    for e in range(kg.num_entities):
        neigh = kg.neighbor_entities(e)
        if neigh.size:
            out[e] = features.vectors[neigh].sum(axis=0, dtype=np.float64)
    return FeatureMatrix(vectors=out, kind="entity")


def gram_schmidt(mat):
    """Column-orthonormalize square blocks (batched over leading dims).

    Modified Gram-Schmidt; gradients flow through. Accepts torch tensors or
    numpy arrays and returns the same container type.
    """
    was_numpy = isinstance(mat, np.ndarray)
    m = torch.as_tensor(mat, dtype=torch.float64) if was_numpy else mat
    if m.shape[-1] != m.shape[-2]:
        raise ValueError("blocks must be square")
    cols: list[torch.Tensor] = []
    for j in range(m.shape[-1]):
        v = m[..., :, j]
        for u in cols:
            v = v - (u * v).sum(dim=-1, keepdim=True) * u
        norm = torch.linalg.vector_norm(v, dim=-1, keepdim=True)
        if bool((norm < _RANK_TOL).any()):
            raise ValueError(f"rank-deficient block: column {j} norm below {_RANK_TOL:g}")
        cols.append(v / norm)
    out = torch.stack(cols, dim=-1)
    return out.numpy() if was_numpy else out


class EntityEncoder(nn.Module):
    """Maps entity ids to embeddings under one of the init modes.

    Without a projection the base matrix (random or feature-derived) is the
    trainable table itself. With a projection, the base matrix is frozen,
    concatenated with a free trainable vector, and passed through a single
    linear layer with optional relu; the linear layer's parameters form the
    separately-scheduled encoder group.
    """

    def __init__(self, num_entities: int, dim: int, init: EmbeddingInit,
                 gamma: float, generator: torch.Generator,
                 dtype: torch.dtype = torch.float32,
                 init_scale: float | None = None):
        super().__init__()
        self.num_entities = num_entities
        self.dim = dim
        self.mode = init.mode
        self.projection = init.projection
        self.activation = init.activation
        scale = (gamma + 2.0) / dim if init_scale is None else init_scale
        if init.mode == "random":
            base = (torch.rand((num_entities, dim), generator=generator,
                               dtype=dtype) * 2 - 1) * scale
        else:
            feats = torch.as_tensor(init.features.vectors.copy(), dtype=dtype)
            if feats.shape[0] < num_entities:
                raise ValueError("feature matrix must cover all entities")
            feats = feats[:num_entities]
            if not init.projection and feats.shape[1] != dim:
                raise ValueError(
                    f"feature dim {feats.shape[1]} != model dim {dim}; "
                    "a projection layer is required to bridge them")
            base = feats
        if init.projection:
            self.register_buffer("base", base)
            in_dim = base.shape[1] + dim
            self.free = nn.Parameter(
                (torch.rand((num_entities, dim), generator=generator,
                            dtype=dtype) * 2 - 1) * scale)
            bound = 1.0 / in_dim ** 0.5
            self.weight = nn.Parameter(
                (torch.rand((in_dim, dim), generator=generator,
                            dtype=dtype) * 2 - 1) * bound)
            self.bias = nn.Parameter(torch.zeros(dim, dtype=dtype))
        else:
            self.table = nn.Parameter(base.clone().to(dtype))

    def encoder_parameters(self) -> list[nn.Parameter]:
        """Parameters trained at the separate encoder learning rate."""
        return [self.weight, self.bias] if self.projection else []

    def forward(self, ids: torch.Tensor) -> torch.Tensor:
        if not self.projection:
            return self.table[ids]
        x = torch.cat([self.base[ids], self.free[ids]], dim=-1)
        out = x @ self.weight + self.bias
        if self.activation == "relu":
            out = torch.relu(out)
        return out

    def embed_all(self) -> torch.Tensor:
        with torch.no_grad():
            return self.forward(torch.arange(self.num_entities)).detach().clone()


class KgeModel(nn.Module):
    """One trainable scoring model over a fixed entity/relation vocabulary."""

    def __init__(self, kind: str, num_entities: int, num_relations: int,
                 dim: int, init: EmbeddingInit, gamma: float = 3.0,
                 group_size: int = 20, seed: int = 0,
                 dtype: torch.dtype = torch.float32,
                 init_scale: float | None = None):
        super().__init__()
        if kind not in KINDS:
            raise ValueError(f"unknown model kind {kind!r}")
        if kind == "ComplEx" and dim % 2 != 0:
            raise ValueError("hermitian-product models need an even dimension")
        if kind == "NOTE" and dim % group_size != 0:
            raise ValueError(f"dim {dim} not divisible by group size {group_size}")
        self.kind = kind
        self.num_entities = num_entities
        self.num_relations = num_relations
        self.dim = dim
        self.gamma = float(gamma)
        self.note_group_size = group_size if kind == "NOTE" else 0
        gen = torch.Generator().manual_seed(seed)
        self.encoder = EntityEncoder(num_entities, dim, init, gamma, gen, dtype,
                                     init_scale=init_scale)
        scale = (gamma + 2.0) / dim if init_scale is None else init_scale
        if kind == "NOTE":
            k = dim // group_size
            eye = torch.eye(group_size, dtype=dtype).expand(num_relations, k, -1, -1)
            noise = (torch.rand((num_relations, k, group_size, group_size),
                                generator=gen, dtype=dtype) * 2 - 1) * 0.1
            self.rel_m = nn.Parameter(eye + noise)
            self.rel_s = nn.Parameter(torch.zeros((num_relations, k, group_size),
                                                  dtype=dtype))
        else:
            self.rel = nn.Parameter(
                (torch.rand((num_relations, dim), generator=gen,
                            dtype=dtype) * 2 - 1) * scale)

    def encoder_parameters(self) -> list[nn.Parameter]:
        return self.encoder.encoder_parameters()

    def main_parameters(self) -> list[nn.Parameter]:
        enc = {id(p) for p in self.encoder_parameters()}
        return [p for p in self.parameters() if id(p) not in enc]

    def _grouped(self, emb: torch.Tensor) -> torch.Tensor:
        return emb.reshape(*emb.shape[:-1], self.dim // self.note_group_size,
                           self.note_group_size)

    def score_batch(self, h: torch.Tensor, r: torch.Tensor, t: torch.Tensor,
                    direction: str = "head_to_tail") -> torch.Tensor:
        """Score triples; one side may carry a candidate axis.

        head_to_tail scores (h, r) against tail candidates; tail_to_head
        (grouped-transform models only) scores (t, r) against head
        candidates. The single side must be shaped (B,), the candidate side
        (B,) or (B, N); the result matches the candidate side's shape.
        """
        h = torch.as_tensor(h, dtype=torch.long)
        r = torch.as_tensor(r, dtype=torch.long)
        t = torch.as_tensor(t, dtype=torch.long)
        if direction not in ("head_to_tail", "tail_to_head"):
            raise ValueError(f"unknown direction {direction!r}")
        if direction == "tail_to_head" and self.kind != "NOTE":
            raise ValueError("tail_to_head scoring is defined for grouped-transform models only")
        src_idx, tgt_idx = (h, t) if direction == "head_to_tail" else (t, h)
        squeeze = tgt_idx.dim() == 1
        if squeeze:
            tgt_idx = tgt_idx.unsqueeze(1)
        src = self.encoder(src_idx)
        tgt = self.encoder(tgt_idx)
        if self.kind == "TransE":
            shifted = src + self.rel[r]
            out = self.gamma - torch.linalg.vector_norm(
                shifted.unsqueeze(1) - tgt, dim=-1)
        elif self.kind == "ComplEx":
            d2 = self.dim // 2
            hr, hi = src[..., :d2].unsqueeze(1), src[..., d2:].unsqueeze(1)
            tr, ti = tgt[..., :d2], tgt[..., d2:]
            w = self.rel[r]
            wr, wi = w[..., :d2].unsqueeze(1), w[..., d2:].unsqueeze(1)
            # grouping the entity factors first keeps the real-relation
            # symmetry score(h,r,t) == score(t,r,h) exact in floating point
            sym = hr * tr + hi * ti
            antisym = hr * ti - hi * tr
            out = (wr * sym + wi * antisym).sum(dim=-1)
        else:
            q = gram_schmidt(self.rel_m[r])
            s = torch.clamp(self.rel_s[r], -_S_CLAMP, _S_CLAMP)
            if direction == "tail_to_head":
                s = -s
            # normalized so the largest entry is 1: s = 0 scales by identity
            u = torch.exp(s - s.amax(dim=-1, keepdim=True))
            sg = self._grouped(src)
            spec = "bkij,bkj->bki" if direction == "head_to_tail" else "bkji,bkj->bki"
            rotated = torch.einsum(spec, q, sg)
            scaled = (u * rotated).unsqueeze(1)
            dist = torch.linalg.vector_norm(
                scaled - self._grouped(tgt), dim=-1).sum(dim=-1)
            out = self.gamma - dist
        return out.squeeze(1) if squeeze else out


def build_model(kind: str, kg: KnowledgeGraph, dim: int,
                init: EmbeddingInit | None = None, gamma: float = 3.0,
                group_size: int = 20, seed: int = 0,
                dtype: torch.dtype = torch.float32,
                init_scale: float | None = None) -> KgeModel:
    """Construct a model sized to a graph, resolving the init mode.

    neighbor_enhanced resolves the first-order aggregation against the graph
    here, so the encoder itself never needs graph access. ``init_scale``
    overrides the default random-init range (gamma + 2) / dim.
    """
    init = init or EmbeddingInit()
    if init.mode == "neighbor_enhanced":
        init = EmbeddingInit(mode="feature",
                             features=neighbor_enhanced_init(kg, init.features),
                             projection=init.projection,
                             activation=init.activation)
    return KgeModel(kind, kg.num_entities, kg.num_relations, dim, init,
                    gamma=gamma, group_size=group_size, seed=seed, dtype=dtype,
                    init_scale=init_scale)


def _require_kind(model: KgeModel, kind: str) -> None:
    if model.kind != kind:
        raise ValueError(f"kind mismatch: model is {model.kind}, expected {kind}")


def _score_one(model: KgeModel, h: int, r: int, t: int, direction: str) -> float:
    # the candidate axis sits on the side being ranked, per direction
    if direction == "head_to_tail":
        hs, ts = torch.tensor([h]), torch.tensor([[t]])
    else:
        hs, ts = torch.tensor([[h]]), torch.tensor([t])
    with torch.no_grad():
        out = model.score_batch(hs, torch.tensor([r]), ts, direction=direction)
    return float(out[0, 0])


def score_transe(model: KgeModel, h: int, r: int, t: int) -> float:
    _require_kind(model, "TransE")
    return _score_one(model, h, r, t, "head_to_tail")


def score_complex(model: KgeModel, h: int, r: int, t: int) -> float:
    _require_kind(model, "ComplEx")
    return _score_one(model, h, r, t, "head_to_tail")


def score_note(model: KgeModel, h: int, r: int, t: int,
               direction: str = "head_to_tail") -> float:
    _require_kind(model, "NOTE")
    return _score_one(model, h, r, t, direction)


def predict(model: KgeModel, query: tuple[int, int],
            candidates: CandidateList) -> CandidateList:
    """Rescore a retrieved candidate list with the model and re-sort.

    The retrieval scores move into the provenance field; sources are kept.
    """
    h, r = query
    if len(candidates) == 0:
        return candidates
    ents = candidates.entities
    with torch.no_grad():
        out = model.score_batch(torch.tensor([h]), torch.tensor([r]),
                                torch.as_tensor(ents[None, :]))
    scores = out[0].to(torch.float64).numpy()
    order = np.lexsort((ents, -scores))
    rescored = CandidateList(
        head=h, relation=r,
        entities=ents[order], scores=scores[order], cap=candidates.cap,
        sources=[candidates.sources[i] for i in order] if candidates.sources else [],
        retrieval_scores=candidates.scores[order])
    rescored.validate()
    return rescored
