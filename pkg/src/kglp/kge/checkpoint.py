"""Binary model checkpoints with a bitwise-exact save/load round trip.

Layout (little-endian): magic "KGEM", u32 version, u8 kind code, u64 dim,
u64 num_entities, u64 num_relations, u64 group size (0 unless grouped
transform), f64 gamma, u32 block count, then named float32 blocks:
u16 name length, utf-8 name, u8 ndim, u64 per-axis sizes, raw row-major
data. Entity embeddings are materialized through the encoder at save time,
so a loaded model always scores with a plain trainable table.
"""

from __future__ import annotations

import struct

import torch

from .models import EmbeddingInit, KgeModel, KINDS

_MAGIC = b"KGEM"
_VERSION = 1


def _blocks_of(model: KgeModel) -> list[tuple[str, torch.Tensor]]:
    blocks = [("entity_emb", model.encoder.embed_all())]
    if model.kind == "NOTE":
        blocks.append(("relation_m", model.rel_m.detach()))
        blocks.append(("relation_s", model.rel_s.detach()))
    else:
        blocks.append(("relation_emb", model.rel.detach()))
    return blocks


def save_checkpoint(model: KgeModel, path) -> None:
    blocks = _blocks_of(model)
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<IB", _VERSION, KINDS.index(model.kind)))
        fh.write(struct.pack("<QQQQd", model.dim, model.num_entities,
                             model.num_relations, model.note_group_size,
                             model.gamma))
        fh.write(struct.pack("<I", len(blocks)))
        for name, tensor in blocks:
            raw = name.encode("utf-8")
            fh.write(struct.pack("<H", len(raw)))
            fh.write(raw)
            fh.write(struct.pack("<B", tensor.dim()))
            fh.write(struct.pack(f"<{tensor.dim()}Q", *tensor.shape))
            fh.write(tensor.to(torch.float32).numpy().astype("<f4").tobytes())


def _read_exact(fh, n: int) -> bytes:
    data = fh.read(n)
    if len(data) != n:
        raise ValueError("truncated checkpoint file")
    return data


def load_checkpoint(path) -> KgeModel:
    with open(path, "rb") as fh:
        if _read_exact(fh, 4) != _MAGIC:
            raise ValueError("not a model checkpoint: bad magic")
        version, kind_code = struct.unpack("<IB", _read_exact(fh, 5))
        if version != _VERSION:
            raise ValueError(f"unsupported checkpoint version {version}")
        if kind_code >= len(KINDS):
            raise ValueError(f"unknown model kind code {kind_code}")
        dim, num_e, num_r, group, gamma = struct.unpack("<QQQQd", _read_exact(fh, 40))
        (count,) = struct.unpack("<I", _read_exact(fh, 4))
        blocks: dict[str, torch.Tensor] = {}
        for _ in range(count):
            (name_len,) = struct.unpack("<H", _read_exact(fh, 2))
            name = _read_exact(fh, name_len).decode("utf-8")
            (ndim,) = struct.unpack("<B", _read_exact(fh, 1))
            shape = struct.unpack(f"<{ndim}Q", _read_exact(fh, 8 * ndim))
            numel = 1
            for s in shape:
                numel *= s
            raw = _read_exact(fh, numel * 4)
            arr = torch.frombuffer(bytearray(raw), dtype=torch.float32).reshape(shape)
            blocks[name] = arr.clone()
        if fh.read(1):
            raise ValueError("trailing bytes after checkpoint blocks")
    kind = KINDS[kind_code]
    model = KgeModel(kind, num_e, num_r, dim, EmbeddingInit(), gamma=gamma,
                     group_size=group if kind == "NOTE" else 20, seed=0,
                     dtype=torch.float32)
    with torch.no_grad():
        model.encoder.table.copy_(blocks["entity_emb"])
        if kind == "NOTE":
            model.rel_m.copy_(blocks["relation_m"])
            model.rel_s.copy_(blocks["relation_s"])
        else:
            model.rel.copy_(blocks["relation_emb"])
    return model
