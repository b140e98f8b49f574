"""Convex hulls in 2 and 3 dimensions with exact predicates.

Input coordinates are floats, and every float is a dyadic rational.  Each
column is multiplied by the least common denominator of its entries, which
is a positive per-axis scaling and so preserves every orientation sign.
All predicates then run on Python integers and never misclassify a point
because of rounding.

Relative boundary semantics follow the affine span of the input: a
coplanar 3D set is handled as a polygon in its plane, a collinear set as a
segment whose relative boundary is its two endpoints.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from functools import reduce

import numpy as np

from .errors import UnsupportedError


@dataclass(frozen=True)
class HullResult:
    vertices: tuple[int, ...]
    boundary: tuple[int, ...]
    dim: int
    facets: tuple[tuple[int, ...], ...] = ()


def to_exact(points) -> list[tuple[int, ...]]:
    """Scale float coordinates to integers column by column, exactly."""
    pts = np.asarray(points, dtype=float)
    if not np.all(np.isfinite(pts)):
        raise ValueError("hull input must be finite")
    cols = []
    for col in pts.T:
        fr = [Fraction(float(v)) for v in col]
        den = reduce(lambda a, b: a * b // math.gcd(a, b), (f.denominator for f in fr), 1)
        cols.append([int(f * den) for f in fr])
    return [tuple(c[i] for c in cols) for i in range(len(pts))]


def _sub(a, b):
    return tuple(x - y for x, y in zip(a, b))


def _cross3(u, v):
    return (u[1] * v[2] - u[2] * v[1], u[2] * v[0] - u[0] * v[2], u[0] * v[1] - u[1] * v[0])


def _dot(u, v):
    return sum(x * y for x, y in zip(u, v))


def orient2d(a, b, c) -> int:
    return (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])


def orient3d(a, b, c, d) -> int:
    return _dot(_cross3(_sub(b, a), _sub(c, a)), _sub(d, a))


def _hull2d(pts, ids):
    order = sorted(ids, key=lambda i: pts[i])

    def chain(seq):
        out = []
        for i in seq:
            while len(out) >= 2 and orient2d(pts[out[-2]], pts[out[-1]], pts[i]) <= 0:
                out.pop()
            out.append(i)
        return out

    lower = chain(order)
    upper = chain(reversed(order))
    ring = lower[:-1] + upper[:-1]
    edges = [(ring[k], ring[(k + 1) % len(ring)]) for k in range(len(ring))]
    boundary = [i for i in ids
                if any(orient2d(pts[a], pts[b], pts[i]) == 0 for a, b in edges)]
    return ring, boundary, edges


def _affine_basis(pts):
    p0 = pts[0]
    dim_dirs = []
    for p in pts[1:]:
        v = _sub(p, p0)
        if not dim_dirs:
            if any(v):
                dim_dirs.append(v)
        elif len(dim_dirs) == 1:
            u = dim_dirs[0]
            if len(u) == 2:
                if u[0] * v[1] - u[1] * v[0]:
                    dim_dirs.append(v)
            elif any(_cross3(u, v)):
                dim_dirs.append(v)
        elif len(dim_dirs) == 2 and len(p0) == 3:
            if _dot(_cross3(dim_dirs[0], dim_dirs[1]), v):
                dim_dirs.append(v)
                break
    return dim_dirs


def _hull3d(pts):
    n = len(pts)
    p0 = 0
    a = next(i for i in range(1, n) if any(_sub(pts[i], pts[0])))
    b = next(i for i in range(1, n) if any(_cross3(_sub(pts[a], pts[0]), _sub(pts[i], pts[0]))))
    c = next(i for i in range(1, n) if orient3d(pts[0], pts[a], pts[b], pts[i]))
    faces = set()
    tet = [p0, a, b, c]
    for k in range(4):
        f = [tet[j] for j in range(4) if j != k]
        if orient3d(pts[f[0]], pts[f[1]], pts[f[2]], pts[tet[k]]) > 0:
            f[1], f[2] = f[2], f[1]
        faces.add(tuple(f))
    for i in range(n):
        if i in tet:
            continue
        p = pts[i]
        visible = [f for f in faces if orient3d(pts[f[0]], pts[f[1]], pts[f[2]], p) > 0]
        if not visible:
            continue
        vis_edges = set()
        for f in visible:
            vis_edges.update(((f[0], f[1]), (f[1], f[2]), (f[2], f[0])))
        for f in visible:
            faces.discard(f)
        for u, v in vis_edges:
            if (v, u) not in vis_edges:
                faces.add((u, v, i))
    planes = {}
    for f in faces:
        nrm = _cross3(_sub(pts[f[1]], pts[f[0]]), _sub(pts[f[2]], pts[f[0]]))
        off = _dot(nrm, pts[f[0]])
        g = reduce(math.gcd, (abs(x) for x in nrm + (off,)))
        planes[f] = tuple(x // g for x in nrm + (off,))
    vertices, boundary = [], []
    for i in range(n):
        on = {planes[f] for f in faces if orient3d(pts[f[0]], pts[f[1]], pts[f[2]], pts[i]) == 0}
        if on:
            boundary.append(i)
        if len(on) >= 3:
            vertices.append(i)
    return vertices, boundary, sorted(faces)


def convex_hull(points) -> HullResult:
    """Exact hull vertices and relative-boundary membership of 2D/3D points."""
    arr = np.asarray(points, dtype=float)
    if arr.ndim != 2 or arr.shape[1] not in (2, 3):
        raise UnsupportedError("convex_hull supports 2D and 3D points only")
    if len(arr) == 0:
        return HullResult((), (), -1)
    exact = to_exact(arr)
    # duplicates share the classification of their first copy
    first: dict = {}
    canon = [first.setdefault(p, i) for i, p in enumerate(exact)]
    uniq = sorted(set(canon))
    pts = [exact[i] for i in uniq]
    dirs = _affine_basis(pts)
    dim = len(dirs)
    if dim == 0:
        verts, bnd, facets = [0], [0], []
    elif dim == 1:
        u = dirs[0]
        axis = next(k for k, x in enumerate(u) if x)
        key = [p[axis] for p in pts]
        lo, hi = key.index(min(key)), key.index(max(key))
        verts, bnd, facets = sorted({lo, hi}), sorted({lo, hi}), [(lo, hi)]
    elif dim == 2 and arr.shape[1] == 2:
        ring, bnd, facets = _hull2d(pts, list(range(len(pts))))
        verts = sorted(ring)
    elif dim == 2:
        nrm = _cross3(dirs[0], dirs[1])
        drop = next(k for k, x in enumerate(nrm) if x)
        flat = [tuple(x for k, x in enumerate(p) if k != drop) for p in pts]
        ring, bnd, facets = _hull2d(flat, list(range(len(pts))))
        verts = sorted(ring)
    else:
        verts, bnd, facets = _hull3d(pts)
    vset = {uniq[i] for i in verts}
    bset = {uniq[i] for i in bnd}
    vertices = tuple(i for i in range(len(exact)) if canon[i] in vset)
    boundary = tuple(i for i in range(len(exact)) if canon[i] in bset)
    facets = tuple(tuple(uniq[i] for i in f) for f in facets)
    return HullResult(vertices, boundary, dim, facets)
