"""Checkpoint container: JSON manifest header plus named float32 tensor blobs.

Layout:
    b"PSPECKPT1\\n"
    <decimal byte length of the JSON header>\\n
    <JSON header (utf-8)>\\n
    <blob: concatenated little-endian float32 tensors>

The header carries arbitrary metadata under "meta" and a tensor directory
(name, shape, dtype, byte offset into the blob).
"""
from __future__ import annotations

import json
from pathlib import Path

import numpy as np

MAGIC = b"PSPECKPT1\n"


class CheckpointError(ValueError):
    """Malformed or truncated checkpoint file."""


def write_checkpoint(path, meta: dict, tensors: dict[str, np.ndarray]) -> None:
    directory = []
    blobs = []
    offset = 0
    for name, arr in tensors.items():
        data = np.ascontiguousarray(arr, dtype="<f4")
        directory.append({
            "name": name,
            "shape": list(data.shape),
            "dtype": "float32",
            "offset": offset,
        })
        blobs.append(data.tobytes())
        offset += len(blobs[-1])
    header = json.dumps({"meta": meta, "tensors": directory, "blob_bytes": offset},
                        sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(str(len(header)).encode("ascii") + b"\n")
        fh.write(header)
        fh.write(b"\n")
        for blob in blobs:
            fh.write(blob)


def read_checkpoint(path) -> tuple[dict, dict[str, np.ndarray]]:
    raw = Path(path).read_bytes()
    if not raw.startswith(MAGIC):
        raise CheckpointError(f"{path}: bad magic")
    rest = raw[len(MAGIC):]
    nl = rest.index(b"\n")
    header_len = int(rest[:nl])
    header_start = nl + 1
    header = json.loads(rest[header_start:header_start + header_len].decode("utf-8"))
    blob_start = header_start + header_len + 1
    blob = rest[blob_start:]
    if len(blob) != header["blob_bytes"]:
        raise CheckpointError(
            f"{path}: blob is {len(blob)} bytes, header says {header['blob_bytes']}")
    tensors = {}
    for entry in header["tensors"]:
        shape = tuple(entry["shape"])
        count = int(np.prod(shape)) if shape else 1
        start = entry["offset"]
        arr = np.frombuffer(blob, dtype="<f4", count=count, offset=start)
        tensors[entry["name"]] = arr.reshape(shape).copy()
    return header["meta"], tensors
