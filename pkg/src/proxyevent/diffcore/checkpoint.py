"""Binary parameter container.

Layout::

    b"PXCKPT"  magic
    uint32     format version (little endian)
    uint64     header length
    header     UTF-8 JSON: {"meta": ..., "tensors": [[name, shape], ...]}
    payload    float64 little-endian, tensors concatenated in header order
"""

from __future__ import annotations

import json
import os
import struct
from pathlib import Path

import numpy as np

MAGIC = b"PXCKPT"
FORMAT_VERSION = 1


class CheckpointError(ValueError):
    pass


def save_checkpoint(path, tensors: dict[str, np.ndarray], meta: dict | None = None) -> None:
    """Write atomically (temp file + rename) so a crash never leaves a torn file."""
    path = Path(path)
    names = list(tensors)
    arrays = [np.asarray(tensors[n], dtype="<f8") for n in names]
    header = json.dumps(
        {"meta": meta or {}, "tensors": [[n, list(a.shape)] for n, a in zip(names, arrays)]},
        sort_keys=True,
    ).encode("utf-8")
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<IQ", FORMAT_VERSION, len(header)))
        fh.write(header)
        for a in arrays:
            fh.write(a.tobytes())
        fh.flush()
        os.fsync(fh.fileno())
    os.replace(tmp, path)


def load_checkpoint(path) -> tuple[dict[str, np.ndarray], dict]:
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[: len(MAGIC)] != MAGIC:
        raise CheckpointError(f"{path}: not a checkpoint (bad magic)")
    off = len(MAGIC)
    version, hlen = struct.unpack_from("<IQ", blob, off)
    if version != FORMAT_VERSION:
        raise CheckpointError(f"{path}: unsupported format version {version}")
    off += struct.calcsize("<IQ")
    header = json.loads(blob[off: off + hlen].decode("utf-8"))
    off += hlen
    out = {}
    for name, shape in header["tensors"]:
        count = int(np.prod(shape)) if shape else 1
        nbytes = 8 * count
        if off + nbytes > len(blob):
            raise CheckpointError(f"{path}: truncated payload at tensor {name!r}")
        out[name] = np.frombuffer(blob, dtype="<f8", count=count, offset=off).reshape(tuple(shape)).astype(np.float64)
        off += nbytes
    if off != len(blob):
        raise CheckpointError(f"{path}: {len(blob) - off} trailing bytes")
    return out, header["meta"]
