"""Goodness-of-fit network statistics and simulation summaries.

Four distributions per graph: degree, edgewise shared partners, the
undirected triad census, and geodesic distances with an ``inf`` bucket for
disconnected pairs.  ``summarize`` reduces a sample set to per-bucket
quantiles next to the observed value.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from math import comb

import numpy as np

from .errors import InputError
from .graph import Graph

INF = "inf"
FAMILIES = ("degree", "esp", "triad", "geodesic")


def degree_distribution(g: Graph) -> list[float]:
    """``D_i``: share of nodes with degree ``i``, for ``i = 0..n-1``."""
    counts = [0] * g.n
    for d in g.degrees:
        counts[d] += 1
    return [c / g.n for c in counts]


@dataclass
class EspResult:
    proportions: list[float]
    empty: bool = False


def esp_distribution(g: Graph) -> EspResult:
    """``EP_i``: share of edges whose endpoints have exactly ``i`` common neighbors."""
    size = max(g.n - 1, 1)
    counts = [0] * size
    rows = g.rows
    edges = g.edges()
    if not edges:
        return EspResult([0.0] * size, empty=True)
    for i, j in edges:
        counts[(rows[i] & rows[j]).bit_count()] += 1
    m = len(edges)
    return EspResult([c / m for c in counts])


def triad_census(g: Graph) -> list[float]:
    """Share of 3-node sets spanning 0, 1, 2 and 3 edges.

    Counted in closed form: ``t3`` triangles; ``t2`` two-paths that are not
    closed; ``t1`` from the edge count; ``t0`` the remainder.
    """
    n = g.n
    total = comb(n, 3)
    if total == 0:
        return [0.0, 0.0, 0.0, 0.0]
    rows = g.rows
    m = g.num_edges
    tri = sum((rows[i] & rows[j]).bit_count() for i, j in g.edges()) // 3
    wedges = sum(comb(d, 2) for d in g.degrees)
    t3 = tri
    t2 = wedges - 3 * tri
    # each edge lies in n-2 triples; subtract those holding 2 or 3 edges
    t1 = m * (n - 2) - 2 * t2 - 3 * t3
    t0 = total - t1 - t2 - t3
    return [t0 / total, t1 / total, t2 / total, t3 / total]


def geodesic_counts(g: Graph) -> tuple[list[int], int]:
    """Pair counts per finite distance ``1..n-1`` and the disconnected count."""
    n = g.n
    rows = g.rows
    counts = [0] * n
    for s in range(n):
        seen = 1 << s
        frontier = 1 << s
        dist = 0
        while frontier:
            nxt = 0
            f = frontier
            while f:
                low = f & -f
                nxt |= rows[low.bit_length() - 1]
                f ^= low
            nxt &= ~seen
            dist += 1
            if nxt:
                # pairs (s, t) with t > s only, so each pair is counted once
                counts[dist] += (nxt >> (s + 1)).bit_count()
            seen |= nxt
            frontier = nxt
    pairs = n * (n - 1) // 2
    return counts[1:], pairs - sum(counts)


def geodesic_distribution(g: Graph) -> dict:
    """Shares of node pairs at distance ``1, 2, ...`` plus an ``inf`` bucket."""
    pairs = g.n * (g.n - 1) // 2
    finite, inf = geodesic_counts(g)
    out: dict = {}
    if pairs == 0:
        return out
    for k, c in enumerate(finite, start=1):
        out[k] = c / pairs
    out[INF] = inf / pairs
    return out


@dataclass
class GofStats:
    degree: list[float]
    esp: list[float]
    esp_empty: bool
    triad: list[float]
    geodesic: dict

    def buckets(self) -> dict[str, dict]:
        return {
            "degree": dict(enumerate(self.degree)),
            "esp": dict(enumerate(self.esp)),
            "triad": dict(enumerate(self.triad)),
            "geodesic": dict(self.geodesic),
        }


def gof_stats(g: Graph) -> GofStats:
    esp = esp_distribution(g)
    return GofStats(degree_distribution(g), esp.proportions, esp.empty,
                    triad_census(g), geodesic_distribution(g))


def quantiles(values) -> tuple[float, float, float, float, float]:
    """Min, quartiles and max with linear interpolation between order statistics."""
    q = np.quantile(np.asarray(values, dtype=float), [0.0, 0.25, 0.5, 0.75, 1.0],
                    method="linear")
    return tuple(float(v) for v in q)


@dataclass
class BucketSummary:
    statistic: str
    bucket: object
    observed: float
    min: float
    q1: float
    median: float
    q3: float
    max: float

    @property
    def covered(self) -> bool:
        return self.min - 1e-12 <= self.observed <= self.max + 1e-12


@dataclass
class GofSummary:
    rows: list[BucketSummary]
    sample_count: int
    flags: dict = field(default_factory=dict)

    def family(self, name: str) -> list[BucketSummary]:
        return [r for r in self.rows if r.statistic == name]

    def coverage(self, families=FAMILIES) -> float:
        rows = [r for r in self.rows if r.statistic in families]
        return sum(r.covered for r in rows) / len(rows) if rows else 1.0

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["statistic", "bucket", "observed", "min", "q1", "median", "q3", "max",
                    "covered"])
        for r in self.rows:
            w.writerow([r.statistic, r.bucket, repr(r.observed), repr(r.min), repr(r.q1),
                        repr(r.median), repr(r.q3), repr(r.max), str(r.covered).lower()])
        return buf.getvalue()


def _bucket_order(keys):
    finite = sorted(k for k in keys if k != INF)
    return finite + ([INF] if INF in keys else [])


def summarize(observed: Graph, samples) -> GofSummary:
    """Per-bucket quantiles of the sample statistics beside the observed values.

    Bucket ranges are the union over all graphs; a bucket missing from a
    graph counts as 0.
    """
    samples = list(samples)
    if not samples:
        raise InputError("summarize needs at least one sample")
    if any(s.n != observed.n for s in samples):
        raise InputError("samples and observed graph have different node counts")
    obs = gof_stats(observed).buckets()
    sims = [gof_stats(s).buckets() for s in samples]
    rows = []
    for fam in FAMILIES:
        keys = set(obs[fam])
        for s in sims:
            keys |= set(s[fam])
        for k in _bucket_order(keys):
            vals = [s[fam].get(k, 0.0) for s in sims]
            rows.append(BucketSummary(fam, k, obs[fam].get(k, 0.0), *quantiles(vals)))
    flags = {"observed_esp_empty": observed.num_edges == 0,
             "samples_esp_empty": sum(s.num_edges == 0 for s in samples)}
    return GofSummary(rows, len(samples), flags)


_TITLES = {"degree": "degree", "esp": "edge-wise shared partners",
           "triad": "triad census", "geodesic": "minimum geodesic distance"}


def summary_svg(summary: GofSummary, family: str, width: int = 640, height: int = 360) -> str:
    """Box plot per bucket with the observed values joined by a solid line."""
    rows = summary.family(family)
    if not rows:
        raise InputError(f"no buckets for statistic {family!r}")
    left, right, top, bottom = 56, 16, 32, 40
    pw, ph = width - left - right, height - top - bottom
    hi = max(max(r.max for r in rows), max(r.observed for r in rows), 1e-12)
    step = pw / len(rows)
    box = max(2.0, 0.6 * step)

    def y(v):
        return top + ph * (1 - v / hi)

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
           f'viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="11">',
           f'<rect width="{width}" height="{height}" fill="white"/>',
           f'<text x="{width / 2:.1f}" y="18" text-anchor="middle" font-size="13">'
           f'{_TITLES.get(family, family)} (n samples = {summary.sample_count})</text>',
           f'<line x1="{left}" y1="{top}" x2="{left}" y2="{top + ph}" stroke="black"/>',
           f'<line x1="{left}" y1="{top + ph}" x2="{left + pw}" y2="{top + ph}" stroke="black"/>']
    for t in range(5):
        v = hi * t / 4
        out.append(f'<text x="{left - 6}" y="{y(v) + 4:.1f}" text-anchor="end">{v:.2f}</text>')
    obs_pts = []
    for i, r in enumerate(rows):
        cx = left + step * (i + 0.5)
        out.append(f'<line x1="{cx:.1f}" y1="{y(r.min):.1f}" x2="{cx:.1f}" y2="{y(r.max):.1f}" '
                   f'stroke="#3060c0"/>')
        out.append(f'<rect x="{cx - box / 2:.1f}" y="{y(r.q3):.1f}" width="{box:.1f}" '
                   f'height="{max(y(r.q1) - y(r.q3), 0.5):.1f}" fill="none" stroke="#3060c0"/>')
        out.append(f'<line x1="{cx - box / 2:.1f}" y1="{y(r.median):.1f}" '
                   f'x2="{cx + box / 2:.1f}" y2="{y(r.median):.1f}" stroke="#3060c0" '
                   f'stroke-width="2"/>')
        if len(rows) <= 40 or i % max(1, len(rows) // 20) == 0:
            out.append(f'<text x="{cx:.1f}" y="{top + ph + 14}" text-anchor="middle">'
                       f'{r.bucket}</text>')
        obs_pts.append(f"{cx:.1f},{y(r.observed):.1f}")
    out.append(f'<polyline points="{" ".join(obs_pts)}" fill="none" stroke="black" '
               f'stroke-width="1.5"/>')
    out.append("</svg>")
    return "\n".join(out) + "\n"
