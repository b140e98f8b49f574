"""Spherical embedding of feature dissimilarities.

Points are placed on a sphere of radius ``r`` so that inner products match
``r^2 cos(d_ij / r)``.  The radius is picked to make that Gram matrix as
close to positive semidefinite as possible, and the embedding is the top
eigenpairs of the normalised Gram matrix, rescaled to the unit sphere.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.sparse.linalg import ArpackNoConvergence, eigsh

from .errors import InputError, NumericalError

RADIUS_RTOL = 1e-10
GRID_POINTS = 32
UPPER_FACTOR = 10.0
RANK_RTOL = 1e-8
LANCZOS_MIN = 200
_GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


def dissimilarity_matrix(features) -> np.ndarray:
    """Pairwise Euclidean distances between feature vectors."""
    rows = [np.asarray(f, dtype=float).ravel() for f in features]
    if len(rows) < 2:
        raise InputError("need at least two feature vectors")
    if len({r.size for r in rows}) != 1:
        raise InputError("feature vectors have different dimensions")
    X = np.vstack(rows)
    if not np.all(np.isfinite(X)):
        raise InputError("features must be finite")
    sq = np.sum(X * X, axis=1)
    d2 = sq[:, None] + sq[None, :] - 2.0 * X @ X.T
    D = np.sqrt(np.clip(d2, 0.0, None))
    # exact zeros on identical rows and on the diagonal
    D[np.all(X[:, None, :] == X[None, :, :], axis=2)] = 0.0
    return (D + D.T) / 2.0


def check_dissimilarity(D) -> np.ndarray:
    D = np.asarray(D, dtype=float)
    if D.ndim != 2 or D.shape[0] != D.shape[1]:
        raise InputError("dissimilarity must be a square matrix")
    if not np.all(np.isfinite(D)) or np.any(D < 0):
        raise InputError("dissimilarities must be finite and non-negative")
    if np.any(np.diag(D) != 0) or not np.allclose(D, D.T, rtol=0, atol=1e-12):
        raise InputError("dissimilarity must be symmetric with zero diagonal")
    return D


def min_radius(D) -> float:
    return float(np.max(D)) / math.pi


def gram_from_radius(D, r: float) -> np.ndarray:
    """``Z_ij = r^2 cos(d_ij / r)``."""
    D = np.asarray(D, dtype=float)
    if not r > 0 or r < min_radius(D) * (1 - 1e-12):
        raise InputError(f"radius {r} is below the angular bound max(d)/pi = {min_radius(D)}")
    return r * r * np.cos(np.clip(D / r, 0.0, math.pi))


def smallest_eigenvalue(Z: np.ndarray) -> float:
    """Smallest eigenvalue of a symmetric matrix.

    Large matrices use Lanczos from a fixed start vector (deterministic),
    falling back to the dense solver when it does not converge.
    """
    K = Z.shape[0]
    if K > LANCZOS_MIN:
        try:
            v = eigsh(Z, k=1, which="SA", tol=1e-13, maxiter=20 * K,
                      v0=np.full(K, 1.0 / math.sqrt(K)), return_eigenvectors=False)
            return float(v[0])
        except ArpackNoConvergence:
            pass
    return float(np.linalg.eigvalsh(Z)[0])


def _objective(D, r):
    return abs(smallest_eigenvalue(gram_from_radius(D, r)))


def optimal_radius(D, rtol: float = RADIUS_RTOL, grid: int = GRID_POINTS) -> float:
    """Radius in ``[max d / pi, 10 max d]`` minimising ``|lambda_min(Z(r))|``.

    A geometric grid locates the best basin (first minimum wins, so ties go
    to the smaller radius) and golden-section search refines it.  The
    objective is V-shaped at an exact fit, which defeats parabolic steps.
    """
    D = check_dissimilarity(D)
    top = float(np.max(D))
    if top <= 0:
        raise InputError("all dissimilarities are zero; the radius is undefined")
    lo, hi = top / math.pi, UPPER_FACTOR * top
    rs = np.geomspace(lo, hi, grid)
    vals = [_objective(D, r) for r in rs]
    k = int(np.argmin(vals))
    a, b = rs[max(k - 1, 0)], rs[min(k + 1, grid - 1)]
    c, d = b - _GOLDEN * (b - a), a + _GOLDEN * (b - a)
    fc, fd = _objective(D, c), _objective(D, d)
    for _ in range(200):
        if b - a <= rtol * a:
            break
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - _GOLDEN * (b - a)
            fc = _objective(D, c)
        else:
            a, c, fc = c, d, fd
            d = a + _GOLDEN * (b - a)
            fd = _objective(D, d)
    else:
        raise NumericalError("radius search failed to converge")
    r, v = (c, fc) if fc <= fd else (d, fd)
    return float(min((v, r), (vals[k], rs[k]))[1])


@dataclass
class Embedding:
    """Unit vectors on S^{p-1} for the source features.

    ``raw`` holds the unnormalised rows ``U sqrt(Lambda)``; out-of-sample
    placement solves against these so that a source feature maps back to
    its own point exactly.
    """

    points: np.ndarray
    p: int
    radius: float
    source_features: np.ndarray
    eigen_spectrum: np.ndarray
    raw: np.ndarray
    clamp: float = 0.0
    requested_p: int | None = None

    @property
    def K(self) -> int:
        return self.points.shape[0]

    def to_dict(self) -> dict:
        return {
            "radius": self.radius,
            "p": self.p,
            "requested_p": self.requested_p,
            "clamp": self.clamp,
            "eigen_spectrum": self.eigen_spectrum.tolist(),
            "points": self.points.tolist(),
            "raw": self.raw.tolist(),
            "source_features": self.source_features.tolist(),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, d: dict) -> "Embedding":
        pts = np.array(d["points"], dtype=float)
        return cls(points=pts, p=int(d["p"]), radius=float(d["radius"]),
                   source_features=np.array(d["source_features"], dtype=float),
                   eigen_spectrum=np.array(d["eigen_spectrum"], dtype=float),
                   raw=np.array(d.get("raw", d["points"]), dtype=float),
                   clamp=float(d.get("clamp", 0.0)), requested_p=d.get("requested_p"))

    @classmethod
    def from_json(cls, text: str) -> "Embedding":
        return cls.from_dict(json.loads(text))


def default_dimension(eigvals: np.ndarray, d: int) -> int:
    lam = eigvals[0]
    return int(min(np.sum(eigvals >= RANK_RTOL * lam), d))


def spherical_embedding(features, p: int | None = None, radius: float | None = None
                        ) -> Embedding:
    """Embed feature vectors on the unit sphere S^{p-1}.

    ``p`` defaults to the numerical rank of the normalised Gram matrix,
    capped at the feature dimension.  A requested ``p`` beyond the positive
    spectrum is reduced with a warning.  The dimension never drops below 2;
    missing directions are then zero columns.
    """
    F = np.vstack([np.asarray(f, dtype=float).ravel() for f in features])
    return embed_dissimilarity(dissimilarity_matrix(F), p, radius, F)


def embed_dissimilarity(D, p: int | None = None, radius: float | None = None,
                        source_features=None) -> Embedding:
    """Embedding from a dissimilarity matrix directly.

    Without ``source_features`` the default dimension cap is ``K``, and
    out-of-sample placement is unavailable.
    """
    D = check_dissimilarity(D)
    K = D.shape[0]
    F = (np.zeros((K, 0)) if source_features is None
         else np.asarray(source_features, dtype=float))
    r = optimal_radius(D) if radius is None else float(radius)
    Zhat = gram_from_radius(D, r) / (r * r)
    vals, vecs = np.linalg.eigh(Zhat)
    order = np.argsort(vals)[::-1]
    vals, vecs = vals[order], vecs[:, order]
    positive = int(np.sum(vals > RANK_RTOL * vals[0]))
    if p is None:
        eff = default_dimension(vals, F.shape[1] or K)
    else:
        if p < 2:
            raise InputError("embedding dimension p must be >= 2")
        eff = p
        if p > positive:
            warnings.warn(f"requested p={p} exceeds the positive spectrum rank "
                          f"{positive}; using p={max(positive, 2)}", stacklevel=2)
            eff = positive
    eff = max(2, min(eff, K))
    kept = vals[:eff].copy()
    clamp = float(max(0.0, -kept.min()))
    kept = np.clip(kept, 0.0, None)
    raw = vecs[:, :eff] * np.sqrt(kept)
    if eff > raw.shape[1]:
        raw = np.hstack([raw, np.zeros((K, eff - raw.shape[1]))])
    norms = np.linalg.norm(raw, axis=1)
    if np.any(norms == 0):
        raise NumericalError("an embedded point collapsed to the origin")
    pts = raw / norms[:, None]
    return Embedding(points=pts, p=eff, radius=r, source_features=F,
                     eigen_spectrum=kept, raw=raw, clamp=clamp, requested_p=p)


def out_of_sample(emb: Embedding, x_new, full_output: bool = False):
    """Place a new feature vector on the sphere by least squares.

    Solves ``min_y sum_k (<raw_k, y> - cos(d_k / r))^2`` and normalises.  If
    the solution is zero the nearest source point is used instead; with
    ``full_output`` the return value is ``(y, used_fallback)``.
    """
    x = np.asarray(x_new, dtype=float).ravel()
    if emb.source_features.shape[1] == 0:
        raise InputError("embedding has no source features to measure distances against")
    if x.size != emb.source_features.shape[1]:
        raise InputError("new feature has a different dimension than the sources")
    dist = np.linalg.norm(emb.source_features - x, axis=1)
    target = np.cos(np.minimum(dist / emb.radius, math.pi))
    y, *_ = np.linalg.lstsq(emb.raw, target, rcond=None)
    nrm = np.linalg.norm(y)
    fallback = not (nrm > 1e-12 and np.isfinite(nrm))
    y = emb.points[int(np.argmin(dist))].copy() if fallback else y / nrm
    return (y, fallback) if full_output else y
