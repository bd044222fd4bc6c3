"""Binary checkpoint format.

Layout (little-endian): magic ``UMAN1``, u32 tensor count, then per tensor a
u16 name length, the UTF-8 name, u8 rank, u32 dims, and f32 row-major data.
"""

from __future__ import annotations

import struct
from collections import OrderedDict
from pathlib import Path

import numpy as np

MAGIC = b"UMAN1"


class CheckpointError(ValueError):
    """Malformed or truncated checkpoint file."""


def encode(state: dict[str, np.ndarray]) -> bytes:
    parts = [MAGIC, struct.pack("<I", len(state))]
    for name, arr in state.items():
        arr = np.asarray(arr)
        raw = name.encode("utf-8")
        parts.append(struct.pack("<H", len(raw)))
        parts.append(raw)
        parts.append(struct.pack("<B", arr.ndim))
        parts.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
        parts.append(np.ascontiguousarray(arr, dtype="<f4").tobytes())
    return b"".join(parts)


def decode(raw: bytes) -> OrderedDict[str, np.ndarray]:
    """Parse a whole checkpoint; raises before returning anything on error."""
    pos = 0

    def take(n: int) -> bytes:
        nonlocal pos
        if pos + n > len(raw):
            raise CheckpointError(f"truncated checkpoint at byte {pos} (needed {n} more)")
        chunk = raw[pos : pos + n]
        pos += n
        return chunk

    if take(len(MAGIC)) != MAGIC:
        raise CheckpointError("bad magic, not a UMAN1 checkpoint")
    (count,) = struct.unpack("<I", take(4))
    state: OrderedDict[str, np.ndarray] = OrderedDict()
    for _ in range(count):
        (nlen,) = struct.unpack("<H", take(2))
        try:
            name = take(nlen).decode("utf-8")
        except UnicodeDecodeError as exc:
            raise CheckpointError(f"bad tensor name: {exc}") from None
        (rank,) = struct.unpack("<B", take(1))
        dims = struct.unpack(f"<{rank}I", take(4 * rank))
        size = int(np.prod(dims)) if rank else 1
        data = np.frombuffer(take(4 * size), dtype="<f4").astype(np.float64)
        if name in state:
            raise CheckpointError(f"duplicate tensor {name!r}")
        state[name] = data.reshape(dims)
    if pos != len(raw):
        raise CheckpointError(f"{len(raw) - pos} trailing bytes after last tensor")
    return state


def save(path, state: dict[str, np.ndarray]) -> None:
    Path(path).write_bytes(encode(state))


def load(path) -> OrderedDict[str, np.ndarray]:
    return decode(Path(path).read_bytes())


def round_state(state: dict[str, np.ndarray]) -> OrderedDict[str, np.ndarray]:
    """Copy of ``state`` rounded through float32, i.e. exactly what a save/load yields."""
    return OrderedDict((k, np.asarray(v, dtype=np.float32).astype(np.float64)) for k, v in state.items())
