"""Versioned binary checkpoint format.

Layout (little endian)::

    b"VRCK"  u16 version  u32 header_len  header (UTF-8 JSON, sorted keys)
    then each array listed in header["arrays"] as raw float64, in order

The JSON header carries configs, scalars and RNG states; Python's float
``repr`` round-trips exactly, so the encoding is canonical and lossless.
"""
from __future__ import annotations

import json
import os
import struct
from pathlib import Path

import numpy as np

MAGIC = b"VRCK"
VERSION = 1


class CheckpointError(ValueError):
    pass


def encode_checkpoint(header: dict, arrays: dict[str, np.ndarray]) -> bytes:
    index = []
    blobs = []
    for name in sorted(arrays):
        a = np.ascontiguousarray(arrays[name], dtype="<f8")
        index.append({"name": name, "shape": list(a.shape)})
        blobs.append(a.tobytes())
    head = dict(header)
    head["arrays"] = index
    raw = json.dumps(head, sort_keys=True, separators=(",", ":")).encode("utf-8")
    return MAGIC + struct.pack("<HI", VERSION, len(raw)) + raw + b"".join(blobs)


def decode_checkpoint(data: bytes) -> tuple[dict, dict[str, np.ndarray]]:
    if data[:4] != MAGIC:
        raise CheckpointError("not a checkpoint file")
    version, hlen = struct.unpack_from("<HI", data, 4)
    if version != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    off = 10
    header = json.loads(data[off : off + hlen].decode("utf-8"))
    off += hlen
    arrays = {}
    for entry in header.pop("arrays"):
        shape = tuple(entry["shape"])
        n = int(np.prod(shape)) if shape else 1
        if off + 8 * n > len(data):
            raise CheckpointError("truncated checkpoint")
        arrays[entry["name"]] = np.frombuffer(data, dtype="<f8", count=n, offset=off).reshape(shape).copy()
        off += 8 * n
    if off != len(data):
        raise CheckpointError("trailing bytes in checkpoint")
    return header, arrays


def write_checkpoint(path: str | os.PathLike, header: dict, arrays: dict[str, np.ndarray]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_bytes(encode_checkpoint(header, arrays))
    os.replace(tmp, path)
    return path


def read_checkpoint(path: str | os.PathLike) -> tuple[dict, dict[str, np.ndarray]]:
    return decode_checkpoint(Path(path).read_bytes())
