"""Deterministic seeded RNG substreams.

Every random decision in the package flows from one top-level seed expanded
into named substreams, so each component (baseline draws, random branch
selection, Monte Carlo trials) is reproducible in isolation and independent
of execution order. Python's built-in hash() is salted per process, so the
mixing uses 64-bit FNV-1a, which is stable across runs and platforms.
"""

from __future__ import annotations

import random

import numpy as np

_FNV_OFFSET64 = 0xCBF29CE484222325
_FNV_PRIME64 = 0x100000001B3
_MASK64 = 0xFFFFFFFFFFFFFFFF


def _to_bytes(part: int | str | bytes) -> bytes:
    if isinstance(part, bytes):
        return part
    if isinstance(part, int):
        return int(part & _MASK64).to_bytes(8, "little", signed=False)
    return str(part).encode("utf-8")


def _fnv1a64(data: bytes) -> int:
    h = _FNV_OFFSET64
    for byte in data:
        h ^= byte
        h = (h * _FNV_PRIME64) & _MASK64
    return h


def mix(seed: int, *parts: int | str | bytes) -> int:
    """Mix a base seed with named parts into a stable 64-bit value."""
    h = _fnv1a64(_to_bytes(seed))
    for part in parts:
        h ^= _fnv1a64(_to_bytes(part))
        h = (h * _FNV_PRIME64) & _MASK64
    return (h ^ (h >> 33)) & _MASK64


def substream(seed: int, *parts: int | str | bytes) -> random.Random:
    """A random.Random deterministically derived from (seed, *parts)."""
    return random.Random(mix(seed, *parts))


def substream_family(seed: int, *parts: int | str | bytes):
    """Factory for substreams sharing a prefix of named parts.

    substream_family(s, *p)(*tail) produces the same stream as
    substream(s, *p, *tail); the shared mixing work happens once, which
    matters when deriving one stream per draw in a tight loop.
    """
    base = _fnv1a64(_to_bytes(seed))
    for part in parts:
        base ^= _fnv1a64(_to_bytes(part))
        base = (base * _FNV_PRIME64) & _MASK64

    def make(*tail: int | str | bytes) -> random.Random:
        h = base
        for part in tail:
            h ^= _fnv1a64(_to_bytes(part))
            h = (h * _FNV_PRIME64) & _MASK64
        return random.Random((h ^ (h >> 33)) & _MASK64)

    return make


def np_substream(seed: int, *parts: int | str | bytes) -> np.random.Generator:
    """A numpy Generator deterministically derived from (seed, *parts)."""
    return np.random.default_rng(mix(seed, *parts))
