"""Binary tensor container used for weights, spectrogram dumps and score files.

Layout (all little-endian)::

    b"UITW"  u32 version  u32 count
    count x { u16 name_len, name (UTF-8), u8 rank, rank x u32 dim, float32 data }
"""
from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .model import WeightStore

MAGIC = b"UITW"
VERSION = 1

_HEADER = struct.Struct("<4sII")


class WeightFileError(ValueError):
    pass


def dumps(tensors) -> bytes:
    out = bytearray(_HEADER.pack(MAGIC, VERSION, len(tensors)))
    for name, arr in tensors.items():
        raw = name.encode("utf-8")
        if len(raw) > 0xFFFF:
            raise WeightFileError(f"tensor name too long: {name[:40]}...")
        arr = np.asarray(arr)
        if arr.ndim > 0xFF:
            raise WeightFileError(f"tensor {name!r} has rank {arr.ndim} > 255")
        out += struct.pack("<H", len(raw)) + raw
        out += struct.pack(f"<B{arr.ndim}I", arr.ndim, *arr.shape)
        out += np.ascontiguousarray(arr, dtype="<f4").tobytes()
    return bytes(out)


def loads(buf: bytes, source: str = "<bytes>") -> dict:
    """Parse a container; raises :class:`WeightFileError` on any malformed input."""
    view = memoryview(buf)
    pos = 0

    def take(n, what):
        nonlocal pos
        if pos + n > len(view):
            raise WeightFileError(f"{source}: truncated while reading {what} at byte {pos}")
        chunk = view[pos:pos + n]
        pos += n
        return chunk

    magic, version, count = _HEADER.unpack(take(_HEADER.size, "header"))
    if magic != MAGIC:
        raise WeightFileError(f"{source}: bad magic {bytes(magic)!r}, expected {MAGIC!r}")
    if version != VERSION:
        raise WeightFileError(f"{source}: unsupported version {version}")
    tensors = {}
    for i in range(count):
        (name_len,) = struct.unpack("<H", take(2, f"tensor {i} name length"))
        try:
            name = bytes(take(name_len, f"tensor {i} name")).decode("utf-8")
        except UnicodeDecodeError:
            raise WeightFileError(f"{source}: tensor {i} name is not UTF-8") from None
        if name in tensors:
            raise WeightFileError(f"{source}: duplicate tensor name {name!r}")
        (rank,) = struct.unpack("<B", take(1, f"{name} rank"))
        dims = struct.unpack(f"<{rank}I", take(4 * rank, f"{name} dims"))
        n = int(np.prod(dims, dtype=np.int64))
        data = np.frombuffer(take(4 * n, f"{name} data"), dtype="<f4")
        tensors[name] = data.astype(np.float32).reshape(dims)
    if pos != len(view):
        raise WeightFileError(f"{source}: {len(view) - pos} trailing bytes after {count} tensors")
    return tensors


def save(path, tensors) -> None:
    Path(path).write_bytes(dumps(tensors))


def load(path) -> dict:
    try:
        buf = Path(path).read_bytes()
    except FileNotFoundError:
        raise FileNotFoundError(f"no such tensor file: {path}") from None
    return loads(buf, source=str(path))


def load_weights(path, cfg):
    """Load and validate a :class:`~uit.model.WeightStore` for ``cfg``."""
    try:
        return WeightStore(load(path), cfg)
    except WeightFileError:
        raise
    except ValueError as err:
        raise WeightFileError(f"{path}: {err}") from None
