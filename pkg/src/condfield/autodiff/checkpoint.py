"""Binary checkpoints of one or more :class:`ParamStore` objects.

Layout (all integers little-endian)::

    offset 0   8 bytes   magic  b"CFLDCKPT"
    offset 8   u32       format version (currently 1)
               u32       number of counters C
               C times:  u32 name length, name bytes (utf-8), u64 value
               u32       number of records R
               R times:  u32 name length, name bytes (utf-8),
                         u32 rank, rank x u32 extents,
                         prod(extents) x float32 values (little-endian, C order)

Counters hold each store's Adam step as ``<store>/step``. Records are named
``<store>/param/<name>``, ``<store>/adam_m/<name>`` and ``<store>/adam_v/<name>``.
"""

from __future__ import annotations

import os
import struct
from pathlib import Path

import numpy as np

from .params import ParamStore

MAGIC = b"CFLDCKPT"
VERSION = 1


class CheckpointError(ValueError):
    pass


def _pack_name(name: str) -> bytes:
    raw = name.encode("utf-8")
    return struct.pack("<I", len(raw)) + raw


def save_checkpoint(path: str | os.PathLike, stores: dict[str, ParamStore]) -> None:
    counters = [(f"{key}/step", store.t) for key, store in stores.items()]
    records = []
    for key, store in stores.items():
        for name, p in store.params.items():
            records.append((f"{key}/param/{name}", p.data))
            records.append((f"{key}/adam_m/{name}", store.m[name]))
            records.append((f"{key}/adam_v/{name}", store.v[name]))
    chunks = [MAGIC, struct.pack("<I", VERSION), struct.pack("<I", len(counters))]
    for name, value in counters:
        chunks += [_pack_name(name), struct.pack("<Q", value)]
    chunks.append(struct.pack("<I", len(records)))
    for name, arr in records:
        chunks.append(_pack_name(name))
        chunks.append(struct.pack("<I", arr.ndim))
        chunks.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
        chunks.append(np.ascontiguousarray(arr, dtype="<f4").tobytes())
    path = Path(path)
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_bytes(b"".join(chunks))
    os.replace(tmp, path)


class _Reader:
    def __init__(self, buf: bytes):
        self.buf, self.pos = buf, 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.buf):
            raise CheckpointError(f"truncated checkpoint at byte offset {self.pos}")
        out = self.buf[self.pos:self.pos + n]
        self.pos += n
        return out

    def u32(self) -> int:
        return struct.unpack("<I", self.take(4))[0]

    def name(self) -> str:
        return self.take(self.u32()).decode("utf-8")


def read_checkpoint(path: str | os.PathLike) -> tuple[dict[str, int], dict[str, np.ndarray]]:
    r = _Reader(Path(path).read_bytes())
    if r.take(8) != MAGIC:
        raise CheckpointError("bad checkpoint magic at byte offset 0")
    version = r.u32()
    if version != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    counters = {}
    for _ in range(r.u32()):
        name = r.name()
        counters[name] = struct.unpack("<Q", r.take(8))[0]
    records = {}
    for _ in range(r.u32()):
        name = r.name()
        rank = r.u32()
        shape = struct.unpack(f"<{rank}I", r.take(4 * rank))
        count = int(np.prod(shape)) if rank else 1
        records[name] = np.frombuffer(r.take(4 * count), dtype="<f4").reshape(shape).copy()
    return counters, records


def load_checkpoint(path: str | os.PathLike, stores: dict[str, ParamStore]) -> None:
    """Restore parameters, Adam moments and step counters in place."""
    counters, records = read_checkpoint(path)
    for key, store in stores.items():
        store.t = int(counters.get(f"{key}/step", 0))
        for name, p in store.params.items():
            for kind, target in (("param", p.data), ("adam_m", store.m[name]),
                                 ("adam_v", store.v[name])):
                rec = records.get(f"{key}/{kind}/{name}")
                if rec is None:
                    raise CheckpointError(f"checkpoint lacks record {key}/{kind}/{name}")
                if rec.shape != target.shape:
                    raise CheckpointError(
                        f"shape mismatch for {key}/{kind}/{name}: {rec.shape} vs {target.shape}")
                target[...] = rec
        store.version += 1
