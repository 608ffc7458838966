"""Binary checkpoint container: named float32 tensors.

Layout (little-endian): b"CKPT" | u16 version | u32 count | per entry:
u16 name length, UTF-8 name, u8 ndim, u32 dims[ndim], f32 payload.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

MAGIC = b"CKPT"
VERSION = 1


class CheckpointFormatError(ValueError):
    pass


def checkpoint_bytes(state):
    parts = [MAGIC, struct.pack("<HI", VERSION, len(state))]
    for name, arr in state.items():
        raw = name.encode("utf-8")
        arr = np.asarray(arr)
        if not np.all(np.isfinite(arr)):
            raise CheckpointFormatError(f"{name}: non-finite values")
        parts.append(struct.pack("<H", len(raw)) + raw)
        parts.append(struct.pack("<B", arr.ndim) + struct.pack(f"<{arr.ndim}I", *arr.shape))
        parts.append(np.ascontiguousarray(arr, dtype="<f4").tobytes())
    return b"".join(parts)


def parse_checkpoint(buf):
    if buf[:4] != MAGIC:
        raise CheckpointFormatError(f"bad magic {buf[:4]!r}")
    version, count = struct.unpack_from("<HI", buf, 4)
    if version != VERSION:
        raise CheckpointFormatError(f"unsupported version {version}")
    pos = 10
    state = {}
    try:
        for _ in range(count):
            (n,) = struct.unpack_from("<H", buf, pos)
            pos += 2
            name = buf[pos:pos + n].decode("utf-8")
            pos += n
            (ndim,) = struct.unpack_from("<B", buf, pos)
            pos += 1
            dims = struct.unpack_from(f"<{ndim}I", buf, pos)
            pos += 4 * ndim
            size = int(np.prod(dims, dtype=np.int64))
            if pos + 4 * size > len(buf):
                raise CheckpointFormatError(f"{name}: truncated payload")
            state[name] = np.frombuffer(buf, dtype="<f4", count=size, offset=pos).reshape(dims).astype(np.float32)
            pos += 4 * size
    except struct.error as e:
        raise CheckpointFormatError(f"truncated checkpoint: {e}") from None
    if pos != len(buf):
        raise CheckpointFormatError(f"{len(buf) - pos} trailing bytes")
    return state


def save_checkpoint(state, path):
    Path(path).write_bytes(checkpoint_bytes(state))


def load_checkpoint(path):
    return parse_checkpoint(Path(path).read_bytes())
