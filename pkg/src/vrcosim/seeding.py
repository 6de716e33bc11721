"""Deterministic RNG stream derivation.

Every random stream is a counter-based Philox generator keyed by
``blake2b(f"{master_seed}/{stream_id}")``, so adding a new stream never
perturbs existing ones.
"""
from __future__ import annotations

import hashlib

import numpy as np


def derive_seed(master: int, *stream: object) -> int:
    label = "/".join([str(int(master))] + [str(s) for s in stream])
    digest = hashlib.blake2b(label.encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "little")


def make_rng(master: int, *stream: object) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(key=derive_seed(master, *stream)))


def rng_state(rng: np.random.Generator) -> dict:
    """JSON-friendly copy of a generator's state."""
    return _jsonable(rng.bit_generator.state)


def set_rng_state(rng: np.random.Generator, state: dict) -> None:
    st = dict(state)
    inner = dict(st["state"])
    for key in ("counter", "key"):
        inner[key] = np.array(inner[key], dtype=np.uint64)
    st["state"] = inner
    st["buffer"] = np.array(st["buffer"], dtype=np.uint64)
    rng.bit_generator.state = st


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, np.ndarray):
        return [int(v) for v in obj.tolist()]
    if isinstance(obj, (np.integer,)):
        return int(obj)
    return obj
