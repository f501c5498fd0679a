"""Set partitions and pair partitions of ``{1, ..., m}``.

Points are 1-based throughout, matching the usual combinatorial notation.
Partitions are frozen dataclasses in canonical form, so they hash and can
key memo tables.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Iterator, Sequence

from . import CapExceededError

PAIR_PARTITION_CAP = 16
PARTITION_CAP = 10
T_MIXED_BLOCK_CAP = 8


@dataclass(frozen=True, order=True)
class PairPartition:
    """A perfect matching of ``{1..m}``; blocks are ``(a, b)`` with ``a < b``,
    sorted lexicographically."""

    m: int
    blocks: tuple[tuple[int, int], ...]

    def __post_init__(self):
        if self.m % 2 or self.m < 0:
            raise ValueError(f"pair partitions need even m, got {self.m}")
        if len(self.blocks) != self.m // 2:
            raise ValueError("wrong number of blocks")
        seen = sorted(p for b in self.blocks for p in b)
        if seen != list(range(1, self.m + 1)):
            raise ValueError(f"blocks {self.blocks} do not cover 1..{self.m} exactly once")
        if any(a >= b for a, b in self.blocks) or list(self.blocks) != sorted(self.blocks):
            raise ValueError("blocks are not in canonical form")

    @classmethod
    def from_blocks(cls, blocks) -> "PairPartition":
        canon = tuple(sorted(tuple(sorted(b)) for b in blocks))
        return cls(2 * len(canon), canon)

    def partner(self) -> dict[int, int]:
        out = {}
        for a, b in self.blocks:
            out[a], out[b] = b, a
        return out

    def block_of(self) -> dict[int, int]:
        """Map each point to the index of its block (lexicographic order)."""
        return {p: k for k, b in enumerate(self.blocks) for p in b}

    def __len__(self) -> int:
        return len(self.blocks)


@dataclass(frozen=True, order=True)
class Partition:
    """A set partition of ``{1..m}``; blocks sorted internally and ordered by
    least element."""

    m: int
    blocks: tuple[tuple[int, ...], ...]

    def __post_init__(self):
        seen = sorted(p for b in self.blocks for p in b)
        if seen != list(range(1, self.m + 1)):
            raise ValueError(f"blocks {self.blocks} do not cover 1..{self.m} exactly once")
        if any(not b or list(b) != sorted(b) for b in self.blocks):
            raise ValueError("blocks must be nonempty and sorted")
        if [b[0] for b in self.blocks] != sorted(b[0] for b in self.blocks):
            raise ValueError("blocks must be ordered by least element")

    @classmethod
    def from_blocks(cls, blocks) -> "Partition":
        canon = sorted(tuple(sorted(b)) for b in blocks)
        return cls(sum(len(b) for b in canon), tuple(canon))

    def labels(self) -> tuple[int, ...]:
        """Block index of each point 1..m (a restricted growth string)."""
        lab = [0] * self.m
        for k, b in enumerate(self.blocks):
            for p in b:
                lab[p - 1] = k
        return tuple(lab)

    def is_pair_partition(self) -> bool:
        return all(len(b) == 2 for b in self.blocks)

    def __len__(self) -> int:
        return len(self.blocks)


def double_factorial(n: int) -> int:
    return math.prod(range(n, 0, -2)) if n > 0 else 1


def _pairings(points: tuple[int, ...]) -> Iterator[list[tuple[int, int]]]:
    if not points:
        yield []
        return
    first, rest = points[0], points[1:]
    for i, other in enumerate(rest):
        remaining = rest[:i] + rest[i + 1:]
        for tail in _pairings(remaining):
            yield [(first, other)] + tail


@lru_cache(maxsize=None)
def enumerate_pair_partitions(m: int, cap: int = PAIR_PARTITION_CAP) -> tuple[PairPartition, ...]:
    """All ``(m-1)!!`` pair partitions of ``{1..m}`` in canonical order."""
    if m % 2:
        raise ValueError(f"no pair partitions of an odd set (m={m})")
    if m > cap:
        raise CapExceededError(f"m={m} exceeds the pair-partition cap {cap}")
    out = [PairPartition(m, tuple(p)) for p in _pairings(tuple(range(1, m + 1)))]
    return tuple(sorted(out))


def _growth_strings(m: int) -> Iterator[tuple[int, ...]]:
    if m == 0:
        yield ()
        return

    def rec(prefix: list[int], top: int):
        if len(prefix) == m:
            yield tuple(prefix)
            return
        for v in range(top + 2):
            prefix.append(v)
            yield from rec(prefix, max(top, v))
            prefix.pop()

    yield from rec([0], 0)


@lru_cache(maxsize=None)
def enumerate_partitions(m: int, cap: int = PARTITION_CAP) -> tuple[Partition, ...]:
    """All Bell(m) set partitions of ``{1..m}``, ordered by restricted
    growth string."""
    if m < 0:
        raise ValueError("m must be nonnegative")
    if m > cap:
        raise CapExceededError(f"m={m} exceeds the partition cap {cap}")
    out = []
    for s in _growth_strings(m):
        blocks = [[] for _ in range(max(s, default=-1) + 1)]
        for point, lab in enumerate(s, start=1):
            blocks[lab].append(point)
        out.append(Partition(m, tuple(tuple(b) for b in blocks)))
    return tuple(out)


def blocks_cross(b1: Sequence[int], b2: Sequence[int]) -> bool:
    (a, b), (c, d) = sorted(b1), sorted(b2)
    return a < c < b < d or c < a < d < b


def crossing_block_pairs(sigma: PairPartition) -> list[tuple[int, int]]:
    """Pairs ``(s, t)`` of block indices whose blocks cross."""
    bl = sigma.blocks
    return [(s, t) for s, t in itertools.combinations(range(len(bl)), 2)
            if blocks_cross(bl[s], bl[t])]


def inversions(sigma: PairPartition) -> frozenset[tuple[int, int]]:
    """The inversion set: for crossing blocks ``{r, j}``, ``{i, l}`` with
    ``r < i < j < l`` it contains ``(i, j)``, the two inner points."""
    out = set()
    for s, t in crossing_block_pairs(sigma):
        (r, j), (i, l) = sorted((sigma.blocks[s], sigma.blocks[t]))
        out.add((i, j))
    return frozenset(out)


def crossing_count(sigma: PairPartition) -> int:
    return len(crossing_block_pairs(sigma))


def beta_q(sigma: PairPartition, q: float) -> float:
    """``q ** I(sigma)`` with ``0 ** 0 = 1``."""
    return float(q) ** crossing_count(sigma)


def t_mixed(sigma: PairPartition, q: Sequence[float]) -> float | None:
    """Mixed-q partition weight.

    ``q[i-1]`` is the colour of point ``i``.  Averages, over all orderings of
    the blocks, the product over crossing block pairs of the colour of the
    block that comes later in the ordering.  Returns ``None`` when ``q`` is
    not constant on the blocks of ``sigma`` (such partitions carry no weight
    in the limit).
    """
    if len(q) != sigma.m:
        raise ValueError(f"need {sigma.m} colours, got {len(q)}")
    r = len(sigma.blocks)
    if r > T_MIXED_BLOCK_CAP:
        raise CapExceededError(f"{r} blocks exceed the permutation cap {T_MIXED_BLOCK_CAP}")
    colour = []
    for a, b in sigma.blocks:
        if q[a - 1] != q[b - 1]:
            return None
        colour.append(float(q[a - 1]))
    crossings = crossing_block_pairs(sigma)
    if not crossings:
        return 1.0
    total = 0.0
    for order in itertools.permutations(range(r)):
        rank = {blk: pos for pos, blk in enumerate(order)}
        prod = 1.0
        for s, t in crossings:
            prod *= colour[t] if rank[t] > rank[s] else colour[s]
        total += prod
    return total / math.factorial(r)
