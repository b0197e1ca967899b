"""Prefix-cache simulation over flattened leaf streams.

The theoretical hit count is the reuse ceiling: each stream after the first
contributes the length of its longest prefix shared with any earlier stream
(prompt included). The simulator defines the actual count by replay: streams
are served in generation order, each one first matched against the cache and
then inserted in full, subject to block granularity, capacity, and eviction.
With unlimited capacity and token granularity the two counts coincide.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

from .errors import ConfigError, InvariantViolation


@dataclass(frozen=True)
class CacheStats:
    actual_hits: int        # tokens actually served from cache during replay
    theoretical_hits: int   # reuse ceiling given the stream order
    flat_length: int        # total length of all streams

    def __post_init__(self):
        if not 0 <= self.actual_hits <= self.theoretical_hits <= self.flat_length:
            raise InvariantViolation(
                f"cache accounting out of order: actual={self.actual_hits} "
                f"theoretical={self.theoretical_hits} flat={self.flat_length}")

    @property
    def actual_rate(self) -> float:
        return self.actual_hits / self.flat_length if self.flat_length else 0.0

    @property
    def theoretical_rate(self) -> float:
        return self.theoretical_hits / self.flat_length if self.flat_length else 0.0

    def to_dict(self) -> dict:
        return {
            "actual_hits": self.actual_hits,
            "theoretical_hits": self.theoretical_hits,
            "flat_length": self.flat_length,
            "actual_rate": self.actual_rate,
            "theoretical_rate": self.theoretical_rate,
        }


class _TrieNode:
    __slots__ = ("children", "last_access")

    def __init__(self):
        self.children: dict[tuple, "_TrieNode"] = {}
        self.last_access = 0


def theoretical_hit_count(streams: Sequence[Sequence[int]]) -> int:
    """Reuse ceiling: sum over streams of the longest shared prefix length.

    Implemented with a token trie over all earlier streams, so a prefix
    counts when it matches a prefix of any previously generated stream.
    """
    if not streams:
        raise ConfigError("theoretical_hit_count needs at least one stream")
    root = _TrieNode()
    total = 0
    for stream in streams:
        node = root
        matched = 0
        missed = False
        for token in stream:
            key = (token,)
            child = node.children.get(key)
            if child is None:
                missed = True
                child = _TrieNode()
                node.children[key] = child
            elif not missed:
                matched += 1
            node = child
        total += matched
    return total


class PrefixCache:
    """Radix-style prefix cache with block granularity and optional eviction.

    Blocks hold `block_size` consecutive tokens; only full blocks are cached,
    so a match is always a multiple of the block size (partial trailing
    blocks are floored away). Capacity counts cached tokens. Eviction "none"
    stops inserting once full; "lru" evicts least-recently-used childless
    blocks until the new insertion fits.
    """

    def __init__(self, block_size: int = 1, capacity: int | None = None,
                 eviction: str = "none"):
        if block_size < 1:
            raise ConfigError(f"block_size must be >= 1, got {block_size}")
        if capacity is not None and capacity < 0:
            raise ConfigError(f"capacity must be >= 0, got {capacity}")
        if eviction not in ("none", "lru"):
            raise ConfigError(f"unknown eviction policy {eviction!r}")
        self.block_size = block_size
        self.capacity = capacity
        self.eviction = eviction
        self._root = _TrieNode()
        self._cached_tokens = 0
        self._clock = 0

    def _blocks(self, stream: Sequence[int]) -> list[tuple]:
        size = self.block_size
        count = len(stream) // size
        return [tuple(stream[i * size:(i + 1) * size]) for i in range(count)]

    def _tick(self) -> int:
        self._clock += 1
        return self._clock

    def match(self, stream: Sequence[int]) -> int:
        """Tokens served from cache for this stream (block-aligned)."""
        node = self._root
        matched = 0
        for block in self._blocks(stream):
            child = node.children.get(block)
            if child is None:
                break
            child.last_access = self._tick()
            matched += self.block_size
            node = child
        return matched

    def insert(self, stream: Sequence[int]) -> None:
        node = self._root
        for block in self._blocks(stream):
            child = node.children.get(block)
            if child is None:
                if self.capacity is not None and self._cached_tokens + self.block_size > self.capacity:
                    if self.eviction != "lru" or not self._evict_one(protect=node):
                        return
                child = _TrieNode()
                node.children[block] = child
                self._cached_tokens += self.block_size
            child.last_access = self._tick()
            node = child

    def _evict_one(self, protect: _TrieNode) -> bool:
        """Drop the least-recently-used childless block, if any.

        Only childless blocks are evictable so cached paths stay rooted;
        `protect` is the node currently being extended by an insertion.
        """
        victim: tuple[_TrieNode, tuple, int] | None = None
        stack = [self._root]
        while stack:
            node = stack.pop()
            for key, child in node.children.items():
                if child.children:
                    stack.append(child)
                elif child is not protect and (victim is None or child.last_access < victim[2]):
                    victim = (node, key, child.last_access)
        if victim is None:
            return False
        del victim[0].children[victim[1]]
        self._cached_tokens -= self.block_size
        return True

    @property
    def cached_tokens(self) -> int:
        return self._cached_tokens


def simulate(streams: Sequence[Sequence[int]], cache: PrefixCache) -> CacheStats:
    """Replay streams in generation order through the cache."""
    if not streams:
        raise ConfigError("simulate needs at least one stream")
    actual = 0
    for stream in streams:
        actual += cache.match(stream)
        cache.insert(stream)
    return CacheStats(
        actual_hits=actual,
        theoretical_hits=theoretical_hit_count(streams),
        flat_length=sum(len(s) for s in streams),
    )
