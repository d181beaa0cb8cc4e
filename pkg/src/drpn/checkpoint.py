"""Binary checkpoint format for named f64 tensors.

Layout, all integers little-endian::

    b"DRPN"  u16 version (=1)  u32 entry count
    per entry: u16 name length, utf-8 name, u8 rank, u32 x rank dims,
               f64 x prod(dims) payload, row-major
"""

from __future__ import annotations

import struct
from collections.abc import Iterable, Mapping

import numpy as np

MAGIC = b"DRPN"
VERSION = 1


class CheckpointError(ValueError):
    pass


def _items(tensors):
    if isinstance(tensors, Mapping):
        return list(tensors.items())
    return list(tensors)


def save_checkpoint(tensors: Mapping[str, np.ndarray] | Iterable[tuple[str, np.ndarray]]) -> bytes:
    items = _items(tensors)
    seen = set()
    chunks = [MAGIC, struct.pack("<HI", VERSION, len(items))]
    for name, value in items:
        if not name:
            raise CheckpointError("tensor names must be non-empty")
        if name in seen:
            raise CheckpointError(f"duplicate tensor name {name!r}")
        seen.add(name)
        encoded = name.encode("utf-8")
        arr = np.asarray(value, dtype=np.float64)
        if len(encoded) > 0xFFFF or arr.ndim > 0xFF:
            raise CheckpointError(f"tensor {name!r} does not fit the format")
        chunks.append(struct.pack("<H", len(encoded)))
        chunks.append(encoded)
        chunks.append(struct.pack(f"<B{arr.ndim}I", arr.ndim, *arr.shape))
        chunks.append(np.ascontiguousarray(arr, dtype="<f8").tobytes())
    return b"".join(chunks)


def load_checkpoint(data: bytes) -> dict[str, np.ndarray]:
    view = memoryview(data)
    pos = 0

    def take(n):
        nonlocal pos
        if pos + n > len(view):
            raise CheckpointError(f"truncated checkpoint: wanted {n} bytes at offset {pos}")
        chunk = view[pos:pos + n]
        pos += n
        return chunk

    if bytes(take(4)) != MAGIC:
        raise CheckpointError("bad magic: not a DRPN checkpoint")
    version, count = struct.unpack("<HI", take(6))
    if version != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    out: dict[str, np.ndarray] = {}
    for _ in range(count):
        (name_len,) = struct.unpack("<H", take(2))
        name = bytes(take(name_len)).decode("utf-8")
        if name in out:
            raise CheckpointError(f"duplicate tensor name {name!r}")
        (rank,) = struct.unpack("<B", take(1))
        dims = struct.unpack(f"<{rank}I", take(4 * rank))
        size = int(np.prod(dims, dtype=np.int64))
        payload = np.frombuffer(take(8 * size), dtype="<f8")
        out[name] = payload.astype(np.float64).reshape(dims)
    if pos != len(view):
        raise CheckpointError(f"{len(view) - pos} trailing bytes after last entry")
    return out


def write_checkpoint(path, tensors) -> None:
    with open(path, "wb") as fh:
        fh.write(save_checkpoint(tensors))


def read_checkpoint(path) -> dict[str, np.ndarray]:
    with open(path, "rb") as fh:
        return load_checkpoint(fh.read())
