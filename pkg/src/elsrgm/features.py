"""Subgraph-count features: edges, triangles and k-stars."""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from math import comb
from typing import Iterable, Sequence

import numpy as np

from .errors import InputError
from .graph import Graph

_KSTAR = re.compile(r"kstar(\d+)$")


def _check_tag(tag: str) -> str:
    if tag in ("edge", "triangle"):
        return tag
    m = _KSTAR.match(tag)
    if not m or int(m.group(1)) < 2:
        raise InputError(f"unknown feature tag {tag!r}")
    return tag


@dataclass(frozen=True)
class FeatureSpec:
    """Ordered list of feature tags (``edge``, ``triangle``, ``kstarK``)."""

    terms: tuple[str, ...]

    def __post_init__(self):
        terms = tuple(_check_tag(t) for t in self.terms)
        if not terms:
            raise InputError("feature spec must not be empty")
        if len(set(terms)) != len(terms):
            raise InputError("feature tags must be unique")
        object.__setattr__(self, "terms", terms)

    @property
    def d(self) -> int:
        return len(self.terms)

    @property
    def max_arity(self) -> int:
        return max([kstar_arity(t) for t in self.terms if t.startswith("kstar")],
                   default=0)

    def validate(self, n: int) -> None:
        if self.max_arity > n - 1:
            raise InputError(
                f"kstar{self.max_arity} exceeds n-1 = {n - 1} for {n}-node graphs")

    def to_json(self) -> str:
        return json.dumps(list(self.terms))

    @classmethod
    def from_json(cls, text: str) -> "FeatureSpec":
        return cls(tuple(json.loads(text)))

    @classmethod
    def parse(cls, text: str) -> "FeatureSpec":
        """Accept a JSON array or a comma-separated tag list."""
        text = text.strip()
        if text.startswith("["):
            return cls.from_json(text)
        return cls(tuple(t.strip() for t in text.split(",") if t.strip()))


def kstar_arity(tag: str) -> int:
    return int(_KSTAR.match(tag).group(1))


EDGE_TRIANGLE = FeatureSpec(("edge", "triangle"))
EXPERIMENT_SPEC = FeatureSpec(("edge",) + tuple(f"kstar{k}" for k in range(2, 12))
                              + ("triangle",))


def count_edges(g: Graph) -> int:
    return g.num_edges


def count_triangles(g: Graph) -> int:
    rows = g.rows
    total = 0
    for i, j in g.edges():
        total += (rows[i] & rows[j]).bit_count()
    return total // 3


def count_kstars(g: Graph, k: int) -> int:
    if k < 2:
        raise InputError(f"k-star arity must be >= 2, got {k}")
    return sum(comb(d, k) for d in g.degrees)


def feature_vector(g: Graph, spec: FeatureSpec, strict: bool = False) -> tuple[int, ...]:
    """Counts in ``spec`` order.

    k-stars with ``k > n-1`` are identically zero; they are accepted unless
    ``strict`` is set, which turns them into an input error.
    """
    if strict:
        spec.validate(g.n)
    out = []
    tri = None
    for tag in spec.terms:
        if tag == "edge":
            out.append(count_edges(g))
        elif tag == "triangle":
            if tri is None:
                tri = count_triangles(g)
            out.append(tri)
        else:
            out.append(count_kstars(g, kstar_arity(tag)))
    return tuple(out)


def feature_matrix(graphs: Iterable[Graph], spec: FeatureSpec) -> np.ndarray:
    rows = [feature_vector(g, spec) for g in graphs]
    return np.asarray(rows, dtype=np.int64).reshape(len(rows), spec.d)


def format_feature_csv(spec: FeatureSpec, rows: Sequence[Sequence[int]]) -> str:
    lines = [",".join(spec.terms)]
    lines += [",".join(str(int(v)) for v in r) for r in rows]
    return "\n".join(lines) + "\n"
