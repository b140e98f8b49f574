"""Simple undirected labeled graphs stored as pair bitsets.

Bit ``k`` of :attr:`Graph.bits` is the k-th unordered pair in lexicographic
order ``(0,1), (0,2), ..., (0,n-1), (1,2), ..., (n-2,n-1)``.  This ordering
is part of the serialized format and must not change.
"""

from __future__ import annotations

import io
import os
from dataclasses import dataclass, field
from functools import cached_property, lru_cache
from typing import Iterable, Sequence

import numpy as np

from .errors import InputError

MAX_NODES = 256


@lru_cache(maxsize=None)
def pair_table(n: int) -> tuple[tuple[int, int], ...]:
    """All unordered pairs ``(i, j)``, ``i < j``, in bit order."""
    return tuple((i, j) for i in range(n) for j in range(i + 1, n))


def pair_index(n: int, i: int, j: int) -> int:
    if i > j:
        i, j = j, i
    return i * (2 * n - i - 1) // 2 + (j - i - 1)


def _check_pair(n: int, i: int, j: int) -> tuple[int, int]:
    i, j = int(i), int(j)
    if i == j:
        raise InputError(f"self-loop ({i},{j}) is not allowed")
    if not (0 <= i < n and 0 <= j < n):
        raise InputError(f"node index out of range for n={n}: ({i},{j})")
    return (i, j) if i < j else (j, i)


@dataclass(frozen=True)
class Graph:
    """Immutable simple undirected graph on nodes ``0..n-1``."""

    n: int
    bits: int = 0

    def __post_init__(self):
        if not 1 <= self.n <= MAX_NODES:
            raise InputError(f"node count must be in [1, {MAX_NODES}], got {self.n}")
        if self.bits < 0 or self.bits >> (self.n * (self.n - 1) // 2):
            raise InputError("edge bitset has bits outside the pair range")

    @property
    def num_pairs(self) -> int:
        return self.n * (self.n - 1) // 2

    @property
    def num_edges(self) -> int:
        return self.bits.bit_count()

    @cached_property
    def rows(self) -> tuple[int, ...]:
        """Adjacency rows as node bitmasks."""
        rows = [0] * self.n
        table = pair_table(self.n)
        b = self.bits
        while b:
            low = b & -b
            i, j = table[low.bit_length() - 1]
            rows[i] |= 1 << j
            rows[j] |= 1 << i
            b ^= low
        return tuple(rows)

    @cached_property
    def degrees(self) -> tuple[int, ...]:
        return tuple(r.bit_count() for r in self.rows)

    def has_edge(self, i: int, j: int) -> bool:
        i, j = _check_pair(self.n, i, j)
        return bool(self.bits >> pair_index(self.n, i, j) & 1)

    def edges(self) -> list[tuple[int, int]]:
        table = pair_table(self.n)
        out = []
        b = self.bits
        while b:
            low = b & -b
            out.append(table[low.bit_length() - 1])
            b ^= low
        return out

    def adjacency(self) -> np.ndarray:
        a = np.zeros((self.n, self.n), dtype=np.int8)
        for i, j in self.edges():
            a[i, j] = a[j, i] = 1
        return a

    def __repr__(self):
        return f"Graph(n={self.n}, edges={self.edges()})"


def make_graph(n: int, edge_list: Iterable[Sequence[int]] = ()) -> Graph:
    bits = 0
    for e in edge_list:
        i, j = _check_pair(n, e[0], e[1])
        bits |= 1 << pair_index(n, i, j)
    return Graph(n, bits)


def from_rows(rows: Sequence[int]) -> Graph:
    n = len(rows)
    bits = 0
    for k, (i, j) in enumerate(pair_table(n)):
        if rows[i] >> j & 1:
            bits |= 1 << k
    return Graph(n, bits)


def empty_graph(n: int) -> Graph:
    return Graph(n, 0)


def complete_graph(n: int) -> Graph:
    return Graph(n, (1 << (n * (n - 1) // 2)) - 1)


def toggle_edge(g: Graph, i: int, j: int) -> Graph:
    i, j = _check_pair(g.n, i, j)
    return Graph(g.n, g.bits ^ (1 << pair_index(g.n, i, j)))


def hamming_distance(a: Graph, b: Graph) -> int:
    if a.n != b.n:
        raise InputError(f"node-count mismatch: {a.n} vs {b.n}")
    return (a.bits ^ b.bits).bit_count()


def relabel(g: Graph, perm: Sequence[int]) -> Graph:
    """Graph with node ``v`` renamed to ``perm[v]``."""
    if sorted(perm) != list(range(g.n)):
        raise InputError("perm must be a permutation of range(n)")
    return make_graph(g.n, ((perm[i], perm[j]) for i, j in g.edges()))


def random_graph(n: int, p: float, rng: np.random.Generator) -> Graph:
    m = n * (n - 1) // 2
    mask = rng.random(m) < p
    bits = 0
    for k in np.flatnonzero(mask):
        bits |= 1 << int(k)
    return Graph(n, bits)


@dataclass(frozen=True)
class Neighborhood:
    center: Graph
    members: tuple[Graph, ...]
    max_edit: int | None = None
    steps: int = 0
    seed: int | None = field(default=None, compare=False)

    def __len__(self):
        return len(self.members)


def random_walk_neighborhood(center: Graph, steps: int, max_edit: int | None = None,
                             seed=None, restart_every: int | None = None,
                             max_members: int | None = None) -> Neighborhood:
    """Collect the distinct graphs visited by a single-toggle random walk.

    Each step toggles a uniformly chosen pair among the admissible ones.
    With ``max_edit`` set, a walker on the rim of the Hamming ball around
    ``center`` can only undo one of its differences; this is the jump chain
    of the walk that rejects moves leaving the ball, without the wasted
    self-loops.  ``restart_every`` returns the walker to ``center`` every
    that many steps; ``max_members`` stops the walk early once that many
    distinct graphs are collected.
    """
    if steps < 0:
        raise InputError("steps must be non-negative")
    if max_edit is not None and max_edit < 1:
        raise InputError("max_edit must be >= 1")
    rng = np.random.default_rng(seed)
    m = center.num_pairs
    seen = {center.bits: None}
    cur = center.bits
    if m > 0:
        for t in range(1, steps + 1):
            if max_members is not None and len(seen) >= max_members:
                break
            diff = cur ^ center.bits
            if max_edit is not None and diff.bit_count() >= max_edit:
                on = [k for k in range(m) if diff >> k & 1]
                k = on[int(rng.integers(len(on)))]
            else:
                k = int(rng.integers(m))
            cur ^= 1 << k
            seen.setdefault(cur, None)
            if restart_every and t % restart_every == 0:
                cur = center.bits
    members = tuple(Graph(center.n, b) for b in seen)
    return Neighborhood(center, members, max_edit, steps, seed)


def parse_edge_list(text: str, nodes: int | None = None) -> Graph:
    pairs = []
    declared = None
    for lineno, line in enumerate(text.splitlines(), start=1):
        head, _, comment = line.partition("#")
        words = comment.split()
        if len(words) == 2 and words[0] == "nodes" and words[1].isdigit():
            declared = int(words[1])
        line = head.strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) < 2:
            raise InputError(f"line {lineno}: expected two node indices")
        try:
            i, j = int(parts[0]), int(parts[1])
        except ValueError:
            raise InputError(f"line {lineno}: non-integer node index") from None
        if i < 0 or j < 0:
            raise InputError(f"line {lineno}: negative node index")
        pairs.append((i, j))
    if nodes is None:
        nodes = declared
    if nodes is None:
        if not pairs:
            raise InputError("empty edge list needs an explicit node count")
        nodes = max(max(p) for p in pairs) + 1
    return make_graph(nodes, pairs)


def read_edge_list(path: str | os.PathLike, nodes: int | None = None) -> Graph:
    with open(path, encoding="utf-8") as fh:
        return parse_edge_list(fh.read(), nodes)


def format_edge_list(g: Graph) -> str:
    buf = io.StringIO()
    buf.write(f"# nodes {g.n}\n")
    for i, j in g.edges():
        buf.write(f"{i} {j}\n")
    return buf.getvalue()


def write_edge_list(g: Graph, path: str | os.PathLike) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(format_edge_list(g))
