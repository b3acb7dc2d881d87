"""Versioned binary containers and atomic file writes.

One generic layout serves episode datasets, checkpoints, and sample dumps:
an 8-byte magic, a u32 format version, a canonical-JSON metadata block, then
named arrays (name, dtype, shape, raw little-endian bytes).  Readers reject
unknown magic or version with ``ContainerError`` instead of guessing.
"""

from __future__ import annotations

import hashlib
import json
import os
import struct
import tempfile

import numpy as np

MAGIC_EPISODES = b"LAWDAT01"
MAGIC_CHECKPOINT = b"LAWCKP01"
MAGIC_SAMPLES = b"LAWSMP01"
FORMAT_VERSION = 1

_ALLOWED_DTYPES = {"<f8", "<i8", "|u1"}


class ContainerError(ValueError):
    """Corrupt, truncated, or wrong-kind container."""


def canonical_json(obj) -> str:
    """Deterministic JSON: sorted keys, no whitespace variance."""
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def digest_of(obj) -> str:
    return hashlib.sha256(canonical_json(obj).encode("utf-8")).hexdigest()


def atomic_write_bytes(path: str, data: bytes) -> None:
    """Write via a temp file in the same directory, then rename over."""
    d = os.path.dirname(os.path.abspath(path))
    os.makedirs(d, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def atomic_write_text(path: str, text: str) -> None:
    atomic_write_bytes(path, text.encode("utf-8"))


def pack_container(magic: bytes, meta: dict, arrays: dict[str, np.ndarray]) -> bytes:
    if len(magic) != 8:
        raise ValueError("magic must be 8 bytes")
    parts = [magic, struct.pack("<I", FORMAT_VERSION)]
    meta_bytes = canonical_json(meta).encode("utf-8")
    parts.append(struct.pack("<Q", len(meta_bytes)))
    parts.append(meta_bytes)
    parts.append(struct.pack("<I", len(arrays)))
    for name, arr in arrays.items():
        a = np.ascontiguousarray(arr)
        dt = a.dtype.newbyteorder("<") if a.dtype.byteorder == ">" else a.dtype
        a = a.astype(dt, copy=False)
        dts = a.dtype.str if a.dtype.str != "|u1" else "|u1"
        if dts not in _ALLOWED_DTYPES:
            raise ValueError(f"array '{name}' has unsupported dtype {a.dtype}")
        nb = name.encode("utf-8")
        parts.append(struct.pack("<H", len(nb)))
        parts.append(nb)
        db = dts.encode("ascii")
        parts.append(struct.pack("<B", len(db)))
        parts.append(db)
        parts.append(struct.pack("<B", a.ndim))
        parts.append(struct.pack(f"<{a.ndim}Q", *a.shape) if a.ndim else b"")
        raw = a.tobytes(order="C")
        parts.append(struct.pack("<Q", len(raw)))
        parts.append(raw)
    return b"".join(parts)


def write_container(path: str, magic: bytes, meta: dict, arrays: dict[str, np.ndarray]) -> None:
    atomic_write_bytes(path, pack_container(magic, meta, arrays))


def unpack_container(data: bytes, magic: bytes) -> tuple[dict, dict[str, np.ndarray]]:
    view = memoryview(data)
    off = 0

    def need(n):
        nonlocal off
        if off + n > len(view):
            raise ContainerError("truncated container")
        chunk = view[off : off + n]
        off += n
        return chunk

    got = bytes(need(8))
    if got != magic:
        raise ContainerError(f"bad container magic {got!r}, expected {magic!r}")
    (version,) = struct.unpack("<I", need(4))
    if version != FORMAT_VERSION:
        raise ContainerError(f"unsupported container version {version}")
    (meta_len,) = struct.unpack("<Q", need(8))
    meta = json.loads(bytes(need(meta_len)).decode("utf-8"))
    (n_arrays,) = struct.unpack("<I", need(4))
    arrays: dict[str, np.ndarray] = {}
    for _ in range(n_arrays):
        (name_len,) = struct.unpack("<H", need(2))
        name = bytes(need(name_len)).decode("utf-8")
        (dt_len,) = struct.unpack("<B", need(1))
        dts = bytes(need(dt_len)).decode("ascii")
        if dts not in _ALLOWED_DTYPES:
            raise ContainerError(f"array '{name}' has unsupported dtype {dts}")
        (ndim,) = struct.unpack("<B", need(1))
        shape = struct.unpack(f"<{ndim}Q", need(8 * ndim)) if ndim else ()
        (raw_len,) = struct.unpack("<Q", need(8))
        arr = np.frombuffer(need(raw_len), dtype=np.dtype(dts)).reshape(shape).copy()
        arrays[name] = arr
    if off != len(view):
        raise ContainerError("trailing bytes after container payload")
    return meta, arrays


def read_container(path: str, magic: bytes) -> tuple[dict, dict[str, np.ndarray]]:
    with open(path, "rb") as fh:
        data = fh.read()
    return unpack_container(data, magic)
