"""Canonical labeling by individualization and refinement.

The search tree is the usual one: refine the partition of the node set to an
equitable one, individualize each vertex of the first smallest non-singleton
cell in turn, and recurse until the partition is discrete.  The canonical
code is the largest relabeled bitset over all leaves.  Automorphisms found
when two leaves produce the same graph prune sibling subtrees, and the group
order is the product of the orbit lengths along the first path.
"""

from __future__ import annotations

from dataclasses import dataclass

from .errors import UnsupportedError
from .graph import Graph, pair_table

MAX_CANON_NODES = 10

_ABORT = object()


@dataclass(frozen=True)
class CanonicalCode:
    code: bytes
    aut_count: int

    @property
    def n(self) -> int:
        return self.code[0]

    def graph(self) -> Graph:
        """The canonical representative as a labeled graph."""
        return Graph(self.n, int.from_bytes(self.code[1:], "big"))

    def hex(self) -> str:
        return self.code.hex()

    @classmethod
    def fromhex(cls, text: str, aut_count: int) -> "CanonicalCode":
        return cls(bytes.fromhex(text), aut_count)


def refine(rows, cells):
    """Coarsest equitable refinement of an ordered partition.

    Cells split by the tuple of neighbor counts into every current cell, and
    the pieces are ordered by that tuple, so the result depends on the graph
    and the input partition only, never on node names.
    """
    while True:
        masks = []
        for c in cells:
            m = 0
            for v in c:
                m |= 1 << v
            masks.append(m)
        out = []
        changed = False
        for c in cells:
            if len(c) == 1:
                out.append(c)
                continue
            sig = {v: tuple((rows[v] & m).bit_count() for m in masks) for v in c}
            keys = sorted(set(sig.values()))
            if len(keys) == 1:
                out.append(c)
                continue
            changed = True
            for key in keys:
                out.append([v for v in c if sig[v] == key])
        cells = out
        if not changed:
            return cells


def _orbits(gens, n):
    parent = list(range(n))

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for g in gens:
        for v in range(n):
            a, b = find(v), find(g[v])
            if a != b:
                parent[a] = b
    return [find(v) for v in range(n)]


class _Search:
    def __init__(self, g: Graph):
        self.n = g.n
        self.rows = g.rows
        self.pairs = pair_table(g.n)
        self.first_code = None
        self.first_order = None
        self.best_code = -1
        self.best_order = None
        self.gens = []
        self.aut = 1

    def _code(self, order):
        pos = [0] * self.n
        for i, v in enumerate(order):
            pos[v] = i
        rows = self.rows
        bits = 0
        for k, (i, j) in enumerate(self.pairs):
            if rows[order[i]] >> order[j] & 1:
                bits |= 1 << k
        return bits

    def _automorphism(self, order_a, order_b):
        gamma = [0] * self.n
        for a, b in zip(order_a, order_b):
            gamma[a] = b
        if any(gamma[v] != v for v in range(self.n)):
            self.gens.append(gamma)

    def _leaf(self, cells):
        order = [c[0] for c in cells]
        code = self._code(order)
        if self.first_code is None:
            self.first_code = self.best_code = code
            self.first_order = self.best_order = order
            return None
        if code == self.first_code:
            self._automorphism(self.first_order, order)
            return _ABORT
        if code == self.best_code:
            self._automorphism(self.best_order, order)
        elif code > self.best_code:
            self.best_code = code
            self.best_order = order
        return None

    def _split(self, cells, idx, v):
        target = cells[idx]
        rest = [u for u in target if u != v]
        return refine(self.rows, cells[:idx] + [[v], rest] + cells[idx + 1:])

    def visit(self, cells, seq, first_path):
        if len(cells) == self.n:
            return self._leaf(cells)
        idx = min((i for i, c in enumerate(cells) if len(c) > 1),
                  key=lambda i: (len(cells[i]), i))
        target = sorted(cells[idx])
        explored = []
        orbit_len = 1
        for pos, v in enumerate(target):
            if pos > 0:
                fixing = [g for g in self.gens if all(g[s] == s for s in seq)]
                orb = _orbits(fixing, self.n)
                if first_path and orb[v] == orb[target[0]]:
                    orbit_len += 1
                    continue
                if any(orb[v] == orb[w] for w in explored):
                    continue
            child = self._split(cells, idx, v)
            res = self.visit(child, seq + [v], first_path and pos == 0)
            explored.append(v)
            if res is _ABORT:
                if first_path:
                    orbit_len += 1
                else:
                    return _ABORT
        if first_path:
            self.aut *= orbit_len
        return None


def canonical_form(g: Graph) -> CanonicalCode:
    if g.n > MAX_CANON_NODES:
        raise UnsupportedError(
            f"canonical labeling supports n <= {MAX_CANON_NODES}, got n={g.n}")
    s = _Search(g)
    s.visit(refine(g.rows, [list(range(g.n))]), [], True)
    nbytes = (g.num_pairs + 7) // 8
    return CanonicalCode(bytes([g.n]) + s.best_code.to_bytes(nbytes, "big"), s.aut)


def canonical_graph(g: Graph) -> Graph:
    return canonical_form(g).graph()


def is_isomorphic(a: Graph, b: Graph) -> bool:
    return a.n == b.n and canonical_form(a).code == canonical_form(b).code
