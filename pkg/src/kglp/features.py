"""Entity/relation feature matrices and their binary file format.

The on-disk layout is little-endian and normative: a 4-byte magic "FMAT",
u64 row count, u64 dimension, then rows*dim float32 values row-major. Row i
is the feature vector of id i in the vocabulary of the matrix's kind.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

_MAGIC = b"FMAT"
_HEADER = struct.Struct("<QQ")

KINDS = ("entity", "relation")


@dataclass(frozen=True)
class FeatureMatrix:
    """Dense float32 feature vectors, one row per entity or relation."""

    vectors: np.ndarray
    kind: str = "entity"

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown feature kind {self.kind!r}")
        v = np.ascontiguousarray(self.vectors, dtype=np.float32)
        if v.ndim != 2:
            raise ValueError("feature matrix must be 2-dimensional")
        bad = ~np.isfinite(v)
        if bad.any():
            row = int(np.nonzero(bad.any(axis=1))[0][0])
            raise ValueError(f"non-finite value in feature row {row}")
        v.setflags(write=False)
        object.__setattr__(self, "vectors", v)

    @property
    def num_rows(self) -> int:
        return self.vectors.shape[0]

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]

    def row(self, i: int) -> np.ndarray:
        return self.vectors[i]


def save_features(features: FeatureMatrix, path) -> None:
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(_HEADER.pack(features.num_rows, features.dim))
        fh.write(features.vectors.astype("<f4", copy=False).tobytes())


def load_features(path, kind: str = "entity") -> FeatureMatrix:
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != _MAGIC:
            raise ValueError("not a feature file: bad magic")
        header = fh.read(_HEADER.size)
        if len(header) != _HEADER.size:
            raise ValueError("truncated feature file header")
        rows, dim = _HEADER.unpack(header)
        payload = fh.read(rows * dim * 4)
        if len(payload) != rows * dim * 4:
            raise ValueError("feature payload does not match header dimensions")
        if fh.read(1):
            raise ValueError("trailing bytes after feature payload")
    vectors = np.frombuffer(payload, dtype="<f4").reshape(rows, dim)
    return FeatureMatrix(vectors=vectors, kind=kind)
