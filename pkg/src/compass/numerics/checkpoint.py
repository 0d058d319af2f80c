"""Binary checkpoint container.

Layout (little-endian): ``b"CMPS"``, u32 version, u32 tensor count, then per
tensor: u16 name length, UTF-8 name, u8 rank, u32 per dimension, float32
payload in row-major order.
"""

from __future__ import annotations

import io
import os
import struct
from typing import BinaryIO, Mapping

import numpy as np

MAGIC = b"CMPS"
VERSION = 1


class CheckpointError(ValueError):
    pass


def dump(state: Mapping[str, np.ndarray], fh: BinaryIO) -> None:
    fh.write(MAGIC)
    fh.write(struct.pack("<II", VERSION, len(state)))
    for name in sorted(state):
        arr = np.array(state[name], dtype="<f4", order="C")  # ascontiguousarray would promote 0-d to 1-d
        raw = name.encode("utf-8")
        fh.write(struct.pack("<H", len(raw)))
        fh.write(raw)
        fh.write(struct.pack("<B", arr.ndim))
        fh.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
        fh.write(arr.tobytes())


def dumps(state: Mapping[str, np.ndarray]) -> bytes:
    buf = io.BytesIO()
    dump(state, buf)
    return buf.getvalue()


def save(state: Mapping[str, np.ndarray], path: str | os.PathLike) -> None:
    with open(path, "wb") as fh:
        dump(state, fh)


def _read(fh: BinaryIO, n: int) -> bytes:
    data = fh.read(n)
    if len(data) != n:
        raise CheckpointError("truncated checkpoint")
    return data


def load_from(fh: BinaryIO) -> dict[str, np.ndarray]:
    if _read(fh, 4) != MAGIC:
        raise CheckpointError("bad magic bytes; not a CMPS checkpoint")
    version, count = struct.unpack("<II", _read(fh, 8))
    if version != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    state: dict[str, np.ndarray] = {}
    for _ in range(count):
        (name_len,) = struct.unpack("<H", _read(fh, 2))
        name = _read(fh, name_len).decode("utf-8")
        (rank,) = struct.unpack("<B", _read(fh, 1))
        dims = struct.unpack(f"<{rank}I", _read(fh, 4 * rank)) if rank else ()
        n = int(np.prod(dims)) if dims else 1
        payload = np.frombuffer(_read(fh, 4 * n), dtype="<f4").reshape(dims)
        state[name] = payload.astype(np.float64)
    return state


def loads(data: bytes) -> dict[str, np.ndarray]:
    return load_from(io.BytesIO(data))


def load(path: str | os.PathLike) -> dict[str, np.ndarray]:
    with open(path, "rb") as fh:
        return load_from(fh)
