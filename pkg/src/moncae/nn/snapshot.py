"""Weight snapshots: a flat little-endian binary format.

Layout: the magic bytes ``MNCW1``, then one record per tensor in a fixed
order (for each layer: learnable parameters, then running statistics, keys
sorted within each group). A record is the rank and the dims as unsigned
64-bit little-endian integers, followed by the raw 32-bit little-endian
float payload in C order. The order is fully determined by the network
spec, so records carry no names.
"""

from __future__ import annotations

import struct

import numpy as np

from .network import init_state

MAGIC = b"MNCW1"


def _tensors(state):
    for p, e in zip(state.params, state.extras):
        for key in sorted(p):
            yield p, key
        for key in sorted(e):
            yield e, key


def save_state(state, path):
    """Writes every parameter and running-statistic tensor to ``path``."""
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        for holder, key in _tensors(state):
            t = np.asarray(holder[key])
            fh.write(struct.pack("<Q", t.ndim))
            fh.write(struct.pack(f"<{t.ndim}Q", *t.shape))
            fh.write(np.ascontiguousarray(t, dtype="<f4").tobytes())


def load_state(spec, path):
    """Reads a snapshot written for ``spec``; optimizer slots start fresh."""
    state = init_state(spec, seed=0)
    with open(path, "rb") as fh:
        if fh.read(len(MAGIC)) != MAGIC:
            raise ValueError(f"{path}: bad magic, not a weight snapshot")
        for holder, key in _tensors(state):
            expect = holder[key].shape
            raw = fh.read(8)
            if len(raw) < 8:
                raise ValueError(f"{path}: truncated before tensor record")
            (rank,) = struct.unpack("<Q", raw)
            if rank != len(expect):
                raise ValueError(f"{path}: rank {rank} where {len(expect)} expected")
            raw = fh.read(8 * rank)
            if len(raw) < 8 * rank:
                raise ValueError(f"{path}: truncated dims")
            dims = struct.unpack(f"<{rank}Q", raw)
            if dims != expect:
                raise ValueError(f"{path}: dims {dims} where {expect} expected")
            count = int(np.prod(dims, dtype=np.int64)) if rank else 1
            raw = fh.read(4 * count)
            if len(raw) < 4 * count:
                raise ValueError(f"{path}: truncated payload")
            holder[key] = np.frombuffer(raw, dtype="<f4").reshape(dims).astype(np.float32)
        if fh.read(1):
            raise ValueError(f"{path}: trailing bytes after final tensor")
    return state
