"""Binary checkpoint container.

Layout: the magic bytes ``TSI1`` followed by records until end of file. Each
record is ``name_len (u64) | name (UTF-8) | rank (u64) | dims (u64 x rank) |
payload (f64 x prod(dims))``, all little-endian. Records are written in
sorted name order so that equal contents give equal bytes. Complex arrays are
stored as two records, ``<name>.re`` and ``<name>.im``.
"""

from __future__ import annotations

import struct
from pathlib import Path
from typing import Mapping

import numpy as np

MAGIC = b"TSI1"


class CheckpointError(ValueError):
    pass


def _flatten(arrays: Mapping[str, np.ndarray]) -> dict[str, np.ndarray]:
    out = {}
    for name, a in arrays.items():
        a = np.asarray(a)
        if np.iscomplexobj(a):
            out[name + ".re"] = a.real
            out[name + ".im"] = a.imag
        else:
            out[name] = a
    return out


def encode(arrays: Mapping[str, np.ndarray]) -> bytes:
    parts = [MAGIC]
    flat = _flatten(arrays)
    for name in sorted(flat):
        a = np.asarray(flat[name], dtype="<f8")
        raw = name.encode("utf-8")
        parts.append(struct.pack("<Q", len(raw)))
        parts.append(raw)
        parts.append(struct.pack("<Q", a.ndim))
        parts.append(struct.pack(f"<{a.ndim}Q", *a.shape))
        parts.append(a.tobytes())
    return b"".join(parts)


def decode(blob: bytes) -> dict[str, np.ndarray]:
    """Inverse of :func:`encode`; ``.re``/``.im`` pairs are not merged."""
    if blob[:4] != MAGIC:
        raise CheckpointError("not a TSI1 checkpoint")
    out = {}
    pos = 4
    try:
        while pos < len(blob):
            (n,) = struct.unpack_from("<Q", blob, pos)
            pos += 8
            name = blob[pos:pos + n].decode("utf-8")
            pos += n
            (rank,) = struct.unpack_from("<Q", blob, pos)
            pos += 8
            dims = struct.unpack_from(f"<{rank}Q", blob, pos)
            pos += 8 * rank
            count = int(np.prod(dims, dtype=np.int64))
            if pos + 8 * count > len(blob):
                raise CheckpointError(f"record {name!r} is truncated")
            out[name] = np.frombuffer(blob, dtype="<f8", count=count, offset=pos).reshape(dims).astype(np.float64)
            pos += 8 * count
    except struct.error as exc:
        raise CheckpointError(f"corrupt checkpoint: {exc}") from None
    return out


def merge_complex(arrays: Mapping[str, np.ndarray]) -> dict[str, np.ndarray]:
    out = {}
    for name, a in arrays.items():
        if name.endswith(".im"):
            continue
        if name.endswith(".re") and name[:-3] + ".im" in arrays:
            out[name[:-3]] = a + 1j * arrays[name[:-3] + ".im"]
        else:
            out[name] = a
    return out


def save(path, arrays: Mapping[str, np.ndarray]) -> None:
    Path(path).write_bytes(encode(arrays))


def load(path) -> dict[str, np.ndarray]:
    """Read a checkpoint, recombining complex arrays."""
    return merge_complex(decode(Path(path).read_bytes()))
