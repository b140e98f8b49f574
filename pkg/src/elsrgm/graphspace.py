"""Exhaustive small graph spaces.

``enumerate_labeled`` sweeps every edge bitset of ``G_n`` and tallies how
many labeled graphs land on each feature value.  ``enumerate_iso_classes``
builds the isomorphism classes one node at a time and keeps one canonical
representative per class.  The two are tied together by
``sum(n!/|Aut|) == 2**C(n,2)``.
"""

from __future__ import annotations

import csv
import io
import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from itertools import combinations

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import shortest_path

from .canon import CanonicalCode, canonical_form
from .errors import InputError, UnsupportedError
from .features import FeatureSpec, feature_vector, kstar_arity
from .graph import Graph, pair_index, pair_table

MAX_ENUM_NODES = 8
CHUNK_BITS = 20


def default_workers() -> int:
    env = os.environ.get("ELSRGM_THREADS")
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


@dataclass
class FeatureSpace:
    """Weighted support ``{x: w(x)}`` of a feature map over ``G_n``."""

    spec: FeatureSpec
    n: int
    support: dict[tuple[int, ...], int]
    witnesses: dict[tuple[int, ...], Graph] | None = None

    def __post_init__(self):
        self.support = dict(sorted(self.support.items()))

    @property
    def total_weight(self) -> int:
        return sum(self.support.values())

    def __len__(self):
        return len(self.support)

    def keys(self) -> list[tuple[int, ...]]:
        return list(self.support)

    def points(self) -> np.ndarray:
        return np.array(self.keys(), dtype=float).reshape(len(self), self.spec.d)

    def weights(self) -> np.ndarray:
        return np.array(list(self.support.values()), dtype=float)

    def log_weights(self) -> np.ndarray:
        return np.array([math.log(w) for w in self.support.values()])

    def index(self, x) -> int:
        return self.keys().index(tuple(int(v) for v in x))

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write(f"# nodes={self.n}\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(list(self.spec.terms) + ["weight"])
        for x, wt in self.support.items():
            w.writerow(list(x) + [wt])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "FeatureSpace":
        n = None
        body = []
        for line in text.splitlines():
            if line.startswith("#"):
                key, _, val = line[1:].strip().partition("=")
                if key.strip() == "nodes":
                    n = int(val)
                continue
            if line.strip():
                body.append(line)
        rows = list(csv.reader(body))
        if not rows or rows[0][-1] != "weight":
            raise InputError("feature-space CSV needs a header ending in 'weight'")
        spec = FeatureSpec(tuple(rows[0][:-1]))
        support = {tuple(int(v) for v in r[:-1]): int(r[-1]) for r in rows[1:]}
        if n is None:
            total = sum(support.values())
            m = total.bit_length() - 1
            n = int(round((1 + math.sqrt(1 + 8 * m)) / 2))
        return cls(spec, n, support)


def _sweep_chunk(args):
    n, terms, start, stop = args
    pairs = pair_table(n)
    b = np.arange(start, stop, dtype=np.int64)
    bit = [((b >> k) & 1).astype(np.int16) for k in range(len(pairs))]
    cols = []
    deg = None
    for tag in terms:
        if tag == "edge":
            cols.append(np.sum(bit, axis=0, dtype=np.int64) if bit
                        else np.zeros(len(b), np.int64))
        elif tag == "triangle":
            tri = np.zeros(len(b), dtype=np.int64)
            for i, j, k in combinations(range(n), 3):
                tri += (bit[pair_index(n, i, j)] & bit[pair_index(n, i, k)]
                        & bit[pair_index(n, j, k)])
            cols.append(tri)
        else:
            if deg is None:
                deg = [np.zeros(len(b), dtype=np.int64) for _ in range(n)]
                for idx, (i, j) in enumerate(pairs):
                    deg[i] += bit[idx]
                    deg[j] += bit[idx]
            k = kstar_arity(tag)
            table = np.array([math.comb(d, k) for d in range(n)], dtype=np.int64)
            cols.append(sum(table[d] for d in deg))
    feats = np.stack(cols, axis=1)
    uniq, first, counts = np.unique(feats, axis=0, return_index=True,
                                    return_counts=True)
    return [(tuple(int(v) for v in u), int(c), start + int(f))
            for u, c, f in zip(uniq, counts, first)]


def _check_n(n: int):
    if n < 1:
        raise InputError("n must be >= 1")
    if n > MAX_ENUM_NODES:
        raise UnsupportedError(
            f"enumeration supports n <= {MAX_ENUM_NODES}; n={n} has "
            f"2**{n * (n - 1) // 2} labeled graphs")


def enumerate_labeled(n: int, spec: FeatureSpec, workers: int | None = None,
                      allow_large: bool = False, atlas: "IsoAtlas | None" = None,
                      ) -> FeatureSpace:
    """Exact weighted support of ``spec`` over all labeled ``n``-node graphs.

    For ``n == 8`` the 2**28 sweep runs only with ``allow_large``; otherwise
    the support is assembled from the isomorphism classes with weight
    ``n!/|Aut|`` per class.
    """
    _check_n(n)
    if n == MAX_ENUM_NODES and not allow_large:
        return space_from_atlas(atlas or enumerate_iso_classes(n), spec)
    m = n * (n - 1) // 2
    total = 1 << m
    step = 1 << min(CHUNK_BITS, m)
    jobs = [(n, spec.terms, s, min(s + step, total)) for s in range(0, total, step)]
    workers = workers or default_workers()
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(_sweep_chunk, jobs))
    else:
        parts = [_sweep_chunk(j) for j in jobs]
    support: dict = {}
    witnesses: dict = {}
    for part in parts:
        for x, c, first in part:
            support[x] = support.get(x, 0) + c
            witnesses.setdefault(x, Graph(n, first))
    return FeatureSpace(spec, n, support, witnesses)


def space_from_atlas(atlas: "IsoAtlas", spec: FeatureSpec) -> FeatureSpace:
    nfact = math.factorial(atlas.n)
    support: dict = {}
    witnesses: dict = {}
    for code, rep in zip(atlas.codes, atlas.reps):
        x = feature_vector(rep, spec)
        support[x] = support.get(x, 0) + nfact // code.aut_count
        witnesses.setdefault(x, rep)
    return FeatureSpace(spec, atlas.n, support, witnesses)


@dataclass
class IsoAtlas:
    """One canonical representative per isomorphism class of ``n``-node graphs."""

    n: int
    codes: list[CanonicalCode]
    reps: list[Graph]
    perturbation: list[list[int]] | None = None
    _index: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        self._index = {c.code: k for k, c in enumerate(self.codes)}

    def __len__(self):
        return len(self.codes)

    def class_of(self, g: Graph) -> int:
        return self._index[canonical_form(g).code]

    def labeled_total(self) -> int:
        nfact = math.factorial(self.n)
        return sum(nfact // c.aut_count for c in self.codes)

    def build_perturbation(self) -> list[list[int]]:
        """Adjacency between classes one edge toggle apart."""
        if self.perturbation is None:
            adj = []
            for k, rep in enumerate(self.reps):
                nbrs = set()
                for p in range(rep.num_pairs):
                    h = Graph(self.n, rep.bits ^ (1 << p))
                    nbrs.add(self._index[canonical_form(h).code])
                nbrs.discard(k)
                adj.append(sorted(nbrs))
            self.perturbation = adj
        return self.perturbation

    def to_json(self) -> str:
        return json.dumps({
            "n": self.n,
            "classes": [{"code": c.hex(), "aut_count": c.aut_count,
                         "edges": [list(e) for e in r.edges()]}
                        for c, r in zip(self.codes, self.reps)],
            "perturbation": self.perturbation,
        })

    @classmethod
    def from_json(cls, text: str) -> "IsoAtlas":
        from .graph import make_graph

        data = json.loads(text)
        n = data["n"]
        codes = [CanonicalCode.fromhex(c["code"], c["aut_count"]) for c in data["classes"]]
        reps = [make_graph(n, c["edges"]) for c in data["classes"]]
        return cls(n, codes, reps, data.get("perturbation"))


def _extend(rep: Graph, subset: int) -> Graph:
    k = rep.n
    rows = [r | ((subset >> i) & 1) << k for i, r in enumerate(rep.rows)]
    rows.append(subset)
    n = k + 1
    bits = 0
    for idx, (i, j) in enumerate(pair_table(n)):
        if rows[i] >> j & 1:
            bits |= 1 << idx
    g = Graph(n, bits)
    g.__dict__["rows"] = tuple(rows)
    return g


def enumerate_iso_classes(n: int) -> IsoAtlas:
    """All isomorphism classes of simple graphs on ``n`` nodes.

    Every ``(k+1)``-node graph is some ``k``-node graph plus a new vertex,
    so extending each ``k``-node representative by every neighborhood mask
    and deduplicating canonical codes reaches every class.
    """
    _check_n(n)
    level = {canonical_form(Graph(1, 0)).code: canonical_form(Graph(1, 0))}
    reps = {c: Graph(1, 0) for c in level}
    for k in range(1, n):
        nxt: dict = {}
        for rep in reps.values():
            for subset in range(1 << k):
                cand = canonical_form(_extend(rep, subset))
                if cand.code not in nxt:
                    nxt[cand.code] = cand
        level = nxt
        reps = {c: cc.graph() for c, cc in level.items()}
    codes = sorted(level.values(), key=lambda c: (c.graph().num_edges, c.code))
    return IsoAtlas(n, codes, [c.graph() for c in codes])


def cell_diameter(atlas: IsoAtlas, space: FeatureSpace, allow_large: bool = False,
                  batch: int = 512) -> dict[tuple[int, ...], int]:
    """Largest perturbation-graph distance between two classes in a feature cell."""
    if atlas.n != space.n:
        raise InputError("atlas and feature space were built for different n")
    if atlas.n >= 8 and not allow_large:
        raise UnsupportedError("cell diameters for n >= 8 need allow_large")
    adj = atlas.build_perturbation()
    rows, cols = [], []
    for a, nbrs in enumerate(adj):
        rows += [a] * len(nbrs)
        cols += nbrs
    mat = csr_matrix((np.ones(len(rows)), (rows, cols)), shape=(len(adj), len(adj)))
    cells: dict = {}
    for k, rep in enumerate(atlas.reps):
        cells.setdefault(feature_vector(rep, space.spec), []).append(k)
    out = {x: 0 for x in space.support}
    multi = [(x, m) for x, m in cells.items() if len(m) > 1]
    pending = [(x, m) for x, m in multi]
    while pending:
        group, size = [], 0
        while pending and (not group or size + len(pending[0][1]) <= batch):
            group.append(pending.pop(0))
            size += len(group[-1][1])
        sources = [s for _, m in group for s in m]
        dist = shortest_path(mat, unweighted=True, directed=False, indices=sources)
        offset = 0
        for x, members in group:
            block = dist[offset:offset + len(members)][:, members]
            out[x] = int(block.max())
            offset += len(members)
    return out
