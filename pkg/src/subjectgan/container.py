"""Flat binary container for named float64 arrays.

Layout (all integers little-endian)::

    magic        8 bytes   b"SGANCKPT"
    version      uint32    currently 1
    meta_len     uint32    length of the UTF-8 JSON metadata block
    meta         meta_len bytes, JSON object with sorted keys
    n_records    uint32
    n_records times, sorted by name:
        name_len uint32
        name     name_len bytes, UTF-8
        ndim     uint32
        shape    ndim x uint64
        data     prod(shape) x float64, little-endian, row-major

Writes go to a temporary sibling and are renamed into place, so readers
never observe a partial file.
"""

from __future__ import annotations

import json
import os
import struct
from pathlib import Path
from typing import Mapping

import numpy as np

MAGIC = b"SGANCKPT"
VERSION = 1


class ContainerError(ValueError):
    pass


def encode(arrays: Mapping[str, np.ndarray], meta: Mapping | None = None) -> bytes:
    meta_bytes = json.dumps(dict(meta or {}), sort_keys=True, separators=(",", ":")).encode()
    parts = [MAGIC, struct.pack("<II", VERSION, len(meta_bytes)), meta_bytes,
             struct.pack("<I", len(arrays))]
    for name in sorted(arrays):
        a = np.asarray(arrays[name], dtype="<f8")  # tobytes() below emits row-major order
        nb = name.encode()
        parts.append(struct.pack("<I", len(nb)))
        parts.append(nb)
        parts.append(struct.pack("<I", a.ndim))
        parts.append(struct.pack(f"<{a.ndim}Q", *a.shape))
        parts.append(a.tobytes())
    return b"".join(parts)


def decode(buf: bytes) -> tuple[dict[str, np.ndarray], dict]:
    if buf[:8] != MAGIC:
        raise ContainerError("not a container file (bad magic)")
    pos = 8

    def read(fmt):
        nonlocal pos
        size = struct.calcsize(fmt)
        if pos + size > len(buf):
            raise ContainerError("truncated container")
        vals = struct.unpack_from(fmt, buf, pos)
        pos += size
        return vals

    version, meta_len = read("<II")
    if version != VERSION:
        raise ContainerError(f"unsupported container version {version}")
    meta = json.loads(buf[pos:pos + meta_len].decode())
    pos += meta_len
    (n,) = read("<I")
    arrays: dict[str, np.ndarray] = {}
    for _ in range(n):
        (name_len,) = read("<I")
        name = buf[pos:pos + name_len].decode()
        pos += name_len
        (ndim,) = read("<I")
        shape = read(f"<{ndim}Q") if ndim else ()
        count = int(np.prod(shape)) if ndim else 1
        if pos + 8 * count > len(buf):
            raise ContainerError(f"truncated data for record {name!r}")
        arrays[name] = np.frombuffer(buf, dtype="<f8", count=count, offset=pos).astype(np.float64).reshape(shape)
        pos += 8 * count
    return arrays, meta


def atomic_write_bytes(path, data: bytes) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(f".{path.name}.tmp{os.getpid()}")
    tmp.write_bytes(data)
    os.replace(tmp, path)


def atomic_write_text(path, text: str) -> None:
    atomic_write_bytes(path, text.encode())


def save(path, arrays: Mapping[str, np.ndarray], meta: Mapping | None = None) -> None:
    atomic_write_bytes(path, encode(arrays, meta))


def load(path) -> tuple[dict[str, np.ndarray], dict]:
    return decode(Path(path).read_bytes())
