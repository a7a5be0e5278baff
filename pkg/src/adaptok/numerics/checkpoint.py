"""Binary checkpoint container shared by every model in the package.

Layout (all integers little-endian)::

    8 bytes   magic  b"ADPTOKCK"
    uint32    format version
    uint64    header length in bytes
    header    UTF-8 JSON: {"tensors": [{"name", "shape", "dtype", "offset"}], "meta": {...}}
    payload   raw float32 arrays, offsets relative to the payload start
"""

from __future__ import annotations

import json
import os
import struct
from pathlib import Path

import numpy as np

MAGIC = b"ADPTOKCK"
VERSION = 1


class CheckpointError(ValueError):
    pass


def save(path: str | os.PathLike, tensors: dict[str, np.ndarray], meta: dict | None = None) -> None:
    entries, blobs, offset = [], [], 0
    for name in sorted(tensors):
        arr = np.ascontiguousarray(tensors[name], dtype="<f4")
        entries.append({"name": name, "shape": list(arr.shape), "dtype": "float32", "offset": offset})
        blob = arr.tobytes()
        blobs.append(blob)
        offset += len(blob)
    header = json.dumps({"tensors": entries, "meta": meta or {}}, sort_keys=True).encode("utf-8")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(path.suffix + ".tmp")
    with open(tmp, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<IQ", VERSION, len(header)))
        fh.write(header)
        for blob in blobs:
            fh.write(blob)
    os.replace(tmp, path)


def load(path: str | os.PathLike) -> tuple[dict[str, np.ndarray], dict]:
    raw = Path(path).read_bytes()
    if raw[:8] != MAGIC:
        raise CheckpointError(f"{path}: bad magic {raw[:8]!r}")
    version, hlen = struct.unpack("<IQ", raw[8:20])
    if version != VERSION:
        raise CheckpointError(f"{path}: unsupported format version {version}")
    header = json.loads(raw[20 : 20 + hlen].decode("utf-8"))
    base = 20 + hlen
    tensors = {}
    for e in header["tensors"]:
        if e["dtype"] != "float32":
            raise CheckpointError(f"{path}: tensor {e['name']} has unsupported dtype {e['dtype']}")
        n = int(np.prod(e["shape"])) if e["shape"] else 1
        start = base + e["offset"]
        tensors[e["name"]] = np.frombuffer(raw, dtype="<f4", count=n, offset=start).reshape(e["shape"]).copy()
    return tensors, header.get("meta", {})
