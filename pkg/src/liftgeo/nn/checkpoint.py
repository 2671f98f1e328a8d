"""Binary parameter checkpoints.

Layout, all integers little-endian ``uint32``::

    b"LGN1"
    name_len, name (utf-8)        # model kind, optionally followed by JSON metadata
    entry_count
    entry_count x:
        key_len, key (utf-8)
        ndim, dim_0 .. dim_{ndim-1}
        prod(dims) little-endian float32 values
"""
from __future__ import annotations

import json
import struct

import numpy as np

from ..errors import CheckpointMismatch

MAGIC = b"LGN1"


def _u32(n):
    return struct.pack("<I", n)


def encode(kind, entries, meta=None):
    name = kind if meta is None else f"{kind} {json.dumps(meta, sort_keys=True)}"
    out = [MAGIC, _u32(len(name.encode())), name.encode(), _u32(len(entries))]
    for key, value in entries.items():
        arr = np.ascontiguousarray(value, dtype="<f4")
        k = key.encode()
        out += [_u32(len(k)), k, _u32(arr.ndim)]
        out += [_u32(d) for d in arr.shape]
        out.append(arr.tobytes())
    return b"".join(out)


def decode(blob):
    if blob[:4] != MAGIC:
        raise CheckpointMismatch("not a liftgeo checkpoint (bad magic)")
    pos = 4

    def u32():
        nonlocal pos
        (n,) = struct.unpack_from("<I", blob, pos)
        pos += 4
        return n

    def text():
        nonlocal pos
        n = u32()
        s = blob[pos:pos + n].decode()
        pos += n
        return s

    try:
        name = text()
        entries = {}
        for _ in range(u32()):
            key = text()
            shape = tuple(u32() for _ in range(u32()))
            count = int(np.prod(shape, dtype=np.int64))
            entries[key] = np.frombuffer(blob, dtype="<f4", count=count, offset=pos).reshape(shape).copy()
            pos += 4 * count
    except (struct.error, ValueError, UnicodeDecodeError) as exc:
        raise CheckpointMismatch(f"truncated or corrupt checkpoint: {exc}") from exc
    kind, _, meta = name.partition(" ")
    return kind, (json.loads(meta) if meta else {}), entries


def save(path, kind, entries, meta=None):
    with open(path, "wb") as fh:
        fh.write(encode(kind, entries, meta))


def load(path):
    with open(path, "rb") as fh:
        return decode(fh.read())
