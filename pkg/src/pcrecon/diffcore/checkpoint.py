"""PCR1 checkpoint container.

Layout (little-endian)::

    b"PCR1"  u32 version (=1)  u32 array_count
    per array:  u16 name_len  name (UTF-8)  u32 ndim  u32 dims[ndim]
                float32 data, row-major
"""

import struct

import numpy as np

from ..errors import CheckpointError
from ..fileutil import atomic_write

MAGIC = b"PCR1"
VERSION = 1


def encode_checkpoint(arrays):
    chunks = [MAGIC, struct.pack("<II", VERSION, len(arrays))]
    for name, value in arrays.items():
        raw = name.encode("utf-8")
        if len(raw) > 0xFFFF:
            raise CheckpointError(f"array name too long: {name[:40]}...")
        data = np.ascontiguousarray(np.asarray(value, dtype="<f4"))
        chunks.append(struct.pack("<H", len(raw)) + raw)
        chunks.append(struct.pack(f"<I{data.ndim}I", data.ndim, *data.shape))
        chunks.append(data.tobytes(order="C"))
    return b"".join(chunks)


def decode_checkpoint(blob):
    if blob[:4] != MAGIC:
        raise CheckpointError(f"bad magic {blob[:4]!r}, expected {MAGIC!r}")
    try:
        version, count = struct.unpack_from("<II", blob, 4)
        if version != VERSION:
            raise CheckpointError(f"unsupported checkpoint version {version}")
        pos = 12
        arrays = {}
        for _ in range(count):
            (nlen,) = struct.unpack_from("<H", blob, pos)
            pos += 2
            name = blob[pos:pos + nlen].decode("utf-8")
            pos += nlen
            (ndim,) = struct.unpack_from("<I", blob, pos)
            pos += 4
            dims = struct.unpack_from(f"<{ndim}I", blob, pos)
            pos += 4 * ndim
            size = int(np.prod(dims, dtype=np.int64))
            if pos + 4 * size > len(blob):
                raise CheckpointError(f"array {name!r} truncated")
            arrays[name] = np.frombuffer(blob, dtype="<f4", count=size, offset=pos).reshape(dims).copy()
            pos += 4 * size
    except struct.error as exc:
        raise CheckpointError(f"truncated checkpoint: {exc}") from None
    if pos != len(blob):
        raise CheckpointError(f"{len(blob) - pos} trailing bytes after last array")
    return arrays


def write_checkpoint(path, arrays):
    atomic_write(path, encode_checkpoint(arrays))


def read_checkpoint(path):
    with open(path, "rb") as fh:
        return decode_checkpoint(fh.read())
