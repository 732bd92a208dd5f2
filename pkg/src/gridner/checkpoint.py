"""Binary parameter container.

Layout (all integers little-endian)::

    b"W2GRID1"
    u32 metadata length, metadata as UTF-8 JSON (model config, entity types, vocabulary)
    u32 tensor count
    per tensor: u32 name length, UTF-8 name, u32 rank, rank x u64 dims, float64 data
"""

from __future__ import annotations

import io
import json
import struct
from pathlib import Path

import numpy as np

from .core import GridNerError, LabelSet
from .data import Vocabulary
from .model import ModelConfig
from .numerics import Tensor

MAGIC = b"W2GRID1"


class CheckpointError(GridNerError):
    pass


def dumps(params: dict, config: ModelConfig, labels: LabelSet, vocab: Vocabulary | None = None) -> bytes:
    meta = {
        "model_config": config.to_dict(),
        "entity_types": list(labels.entity_types),
        "vocab": None if vocab is None else list(vocab.tokens),
        "vocab_min_freq": None if vocab is None else vocab.min_freq,
    }
    blob = json.dumps(meta, sort_keys=True).encode("utf-8")
    out = io.BytesIO()
    out.write(MAGIC)
    out.write(struct.pack("<I", len(blob)))
    out.write(blob)
    out.write(struct.pack("<I", len(params)))
    for name, t in params.items():
        raw = name.encode("utf-8")
        data = np.ascontiguousarray(t.data, dtype="<f8")
        out.write(struct.pack("<I", len(raw)))
        out.write(raw)
        out.write(struct.pack("<I", data.ndim))
        out.write(struct.pack(f"<{data.ndim}Q", *data.shape))
        out.write(data.tobytes())
    return out.getvalue()


def loads(buf: bytes):
    """Inverse of :func:`dumps`; returns ``(params, config, labels, vocab_or_None)``."""
    view = memoryview(buf)
    pos = 0

    def take(n):
        nonlocal pos
        if pos + n > len(view):
            raise CheckpointError("truncated checkpoint")
        chunk = view[pos:pos + n]
        pos += n
        return chunk

    if bytes(take(len(MAGIC))) != MAGIC:
        raise CheckpointError("not a W2GRID1 checkpoint")
    (meta_len,) = struct.unpack("<I", take(4))
    meta = json.loads(bytes(take(meta_len)).decode("utf-8"))
    config = ModelConfig.from_dict(meta["model_config"])
    labels = LabelSet(tuple(meta["entity_types"]))
    vocab = None
    if meta.get("vocab") is not None:
        vocab = Vocabulary(tuple(meta["vocab"]), meta.get("vocab_min_freq") or 1)
    (count,) = struct.unpack("<I", take(4))
    params = {}
    for _ in range(count):
        (nlen,) = struct.unpack("<I", take(4))
        name = bytes(take(nlen)).decode("utf-8")
        (rank,) = struct.unpack("<I", take(4))
        dims = struct.unpack(f"<{rank}Q", take(8 * rank))
        size = int(np.prod(dims, dtype=np.int64))
        data = np.frombuffer(bytes(take(8 * size)), dtype="<f8").reshape(dims)
        params[name] = Tensor(data.astype(np.float64))
    if pos != len(view):
        raise CheckpointError("trailing bytes after last tensor")
    return params, config, labels, vocab


def save(path, params, config, labels, vocab=None):
    Path(path).write_bytes(dumps(params, config, labels, vocab))


def load(path):
    return loads(Path(path).read_bytes())
