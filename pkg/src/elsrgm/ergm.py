"""Exact ERGMs on enumerated feature spaces.

With the full weighted support in hand, ``P(x | theta) = w(x) exp<theta, x> / Z``
is a finite exponential family and everything (partition function, mean,
covariance, mode) is computed exactly in log space.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.special import logsumexp

from .errors import InputError, NumericalError, UnsupportedError
from .graphspace import FeatureSpace
from .hull import convex_hull

MODE_TIE_TOL = 1e-12


def _theta(space: FeatureSpace, theta) -> np.ndarray:
    th = np.asarray(theta, dtype=float).ravel()
    if th.shape != (space.spec.d,):
        raise InputError(f"theta has dimension {th.size}, feature space has {space.spec.d}")
    if not np.all(np.isfinite(th)):
        raise InputError("theta must be finite")
    return th


def log_scores(space: FeatureSpace, theta) -> np.ndarray:
    """``ln w(x) + <theta, x>`` for every support point, in key order."""
    return space.log_weights() + space.points() @ _theta(space, theta)


def log_partition(space: FeatureSpace, theta) -> float:
    return float(logsumexp(log_scores(space, theta)))


def ergm_probs(space: FeatureSpace, theta) -> np.ndarray:
    s = log_scores(space, theta)
    return np.exp(s - logsumexp(s))


def ergm_pmf(space: FeatureSpace, theta) -> dict[tuple[int, ...], float]:
    return dict(zip(space.keys(), ergm_probs(space, theta).tolist()))


def ergm_moments(space: FeatureSpace, theta):
    p = ergm_probs(space, theta)
    X = space.points()
    mean = p @ X
    centered = X - mean
    cov = centered.T @ (centered * p[:, None])
    return mean, cov


def ergm_mode(space: FeatureSpace, theta, tie_tol: float = MODE_TIE_TOL) -> set[tuple[int, ...]]:
    s = log_scores(space, theta)
    top = s.max()
    keys = space.keys()
    return {keys[i] for i in np.flatnonzero(s >= top - tie_tol)}


@dataclass
class ErgmFit:
    theta_hat: np.ndarray
    converged: bool
    mean_gap: float
    diverging: bool
    log_Z: float
    iterations: int = 0

    def to_dict(self) -> dict:
        d = asdict(self)
        d["theta_hat"] = [float(v) for v in self.theta_hat]
        return d


def ergm_mle(space: FeatureSpace, x_star, tol: float = 1e-6, max_iter: int = 500,
             max_norm: float = 50.0, newton: bool = True, step_tol: float = 1e-7) -> ErgmFit:
    """Maximum-likelihood fit by mean matching, ``E_theta[x] = x_star``.

    Damped Newton ascent on the exact log-likelihood with a backtracking line
    search; plain gradient steps when ``newton`` is off or the Newton
    direction fails to ascend.  Convergence needs both a small gradient and a
    small step, because on the relative boundary of the hull the gradient
    decays to zero while the parameters run off to infinity.
    """
    xs = np.asarray(x_star, dtype=float).ravel()
    if xs.shape != (space.spec.d,):
        raise InputError("x_star dimension does not match the feature space")
    X = space.points()
    lw = space.log_weights()
    lo, hi = X.min(axis=0), X.max(axis=0)
    if np.any(xs < lo) or np.any(xs > hi):
        raise InputError("x_star lies outside the bounding box of the support")
    # work in coordinates centred on x_star so that a target holding almost
    # all of the mass still has gradient and likelihood at full precision
    Y = X - xs
    at = np.flatnonzero(np.all(Y == 0, axis=1))
    rest = np.ones(len(Y), dtype=bool)
    if at.size:
        rest[at[0]] = False

    def loglik(th):
        s = lw + Y @ th
        if at.size:
            tail = logsumexp(s[rest] - s[at[0]]) if rest.any() else -np.inf
            return float(-s[at[0]] - np.logaddexp(0.0, tail))
        return float(-logsumexp(s))

    def moments(th):
        s = lw + Y @ th
        p = np.exp(s - logsumexp(s))
        m = p @ Y
        cov = (Y * p[:, None]).T @ Y - np.outer(m, m)
        return -m, cov

    th = np.zeros(space.spec.d)
    ll = loglik(th)
    converged = diverging = False
    it = 0
    for it in range(1, max_iter + 1):
        grad, cov = moments(th)
        direction = grad
        if newton:
            # diagonal scaling keeps directions whose variance has collapsed
            # (a face of the hull being approached) in the Newton system
            scale = np.sqrt(np.clip(np.diag(cov), 0.0, None))
            live = scale > 0
            step = np.zeros_like(grad)
            if live.any():
                sub = cov[np.ix_(live, live)] / np.outer(scale[live], scale[live])
                z, *_ = np.linalg.lstsq(sub, grad[live] / scale[live], rcond=1e-12)
                step[live] = z / scale[live]
            if np.all(np.isfinite(step)) and step @ grad > 0:
                direction = step
        gmax = np.max(np.abs(grad))
        if gmax <= tol and np.max(np.abs(direction)) <= step_tol * (1 + np.max(np.abs(th))):
            converged = True
            break
        if gmax == 0.0:
            # mass collapsed onto x_star at float precision: MLE at infinity
            diverging = True
            break
        t = 1.0
        slope = float(direction @ grad)
        while t > 1e-12:
            cand = th + t * direction
            new = loglik(cand)
            if not math.isfinite(new):
                raise NumericalError("log-likelihood became non-finite")
            if new >= ll + 1e-4 * t * slope:
                break
            t *= 0.5
        else:
            converged = bool(gmax <= tol)
            break
        th, ll = cand, new
        if np.max(np.abs(th)) > max_norm:
            diverging = True
            break
    grad, _ = moments(th)
    gap = float(np.max(np.abs(grad)))
    if diverging:
        converged = False
    return ErgmFit(th, converged, gap, diverging, float(logsumexp(lw + X @ th)), it)


@dataclass
class ExtendedFeatureSet:
    """Points ``(x, ln w(x))`` with exact hull vertices and boundary flags."""

    keys: list[tuple[int, ...]]
    ln_weights: np.ndarray
    hull_vertices: tuple[int, ...]
    boundary: tuple[int, ...]
    dim: int

    @property
    def points(self) -> np.ndarray:
        return np.column_stack([np.array(self.keys, dtype=float), self.ln_weights])

    def mode_candidates(self) -> set[tuple[int, ...]]:
        return {self.keys[i] for i in self.hull_vertices}

    def position(self, x) -> str:
        """``vertex``, ``boundary`` or ``interior`` for a support point."""
        k = self.keys.index(tuple(int(v) for v in x))
        if k in self.hull_vertices:
            return "vertex"
        if k in self.boundary:
            return "boundary"
        return "interior"


def extended_hull(space: FeatureSpace) -> ExtendedFeatureSet:
    if space.spec.d > 2:
        raise UnsupportedError(
            f"extended hull needs d <= 2 features, got d={space.spec.d}")
    pts = np.column_stack([space.points(), space.log_weights()])
    h = convex_hull(pts)
    return ExtendedFeatureSet(space.keys(), space.log_weights(), h.vertices, h.boundary, h.dim)


def feature_hull(space: FeatureSpace):
    """Exact hull of the plain support (no log weights); needs d in {2, 3}."""
    if space.spec.d not in (2, 3):
        raise UnsupportedError("feature hull needs d in {2, 3}")
    return convex_hull(space.points())


def mode_sweep(space: FeatureSpace, thetas) -> set[tuple[int, ...]]:
    """Every mode attained by some parameter in ``thetas``."""
    X = space.points()
    lw = space.log_weights()
    S = lw[:, None] + X @ np.asarray(thetas, dtype=float).T
    keys = space.keys()
    hit = S >= S.max(axis=0) - MODE_TIE_TOL
    return {keys[i] for i in np.flatnonzero(hit.any(axis=1))}


@dataclass
class DegeneracyReport:
    x_star: tuple[int, ...]
    extended_position: str
    on_extended_boundary: bool
    fit: ErgmFit
    modes: list[tuple[int, ...]]
    mode_distance: float
    prob_at_x_star: float
    prob_at_mode: float
    type1_degenerate: bool
    type2_degenerate: bool
    mode_candidates: list[tuple[int, ...]] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "x_star": list(self.x_star),
            "extended_position": self.extended_position,
            "on_extended_boundary": self.on_extended_boundary,
            "fit": self.fit.to_dict(),
            "modes": [list(m) for m in self.modes],
            "mode_distance": self.mode_distance,
            "prob_at_x_star": self.prob_at_x_star,
            "prob_at_mode": self.prob_at_mode,
            "type1_degenerate": self.type1_degenerate,
            "type2_degenerate": self.type2_degenerate,
            "mode_candidates": [list(m) for m in self.mode_candidates],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


def degeneracy_report(space: FeatureSpace, x_star, ext: ExtendedFeatureSet | None = None,
                      **mle_opts) -> DegeneracyReport:
    """Classify ``x_star`` and check whether its MLE puts the mode elsewhere.

    Type II is flagged when the fit converged, the mode differs from
    ``x_star`` and carries more mass than ``x_star`` does.  A diverging fit
    is reported as type I and never as type II.
    """
    xs = tuple(int(v) for v in x_star)
    if xs not in space.support:
        raise InputError(f"x_star {xs} is not a realizable feature value")
    ext = ext or extended_hull(space)
    pos = ext.position(xs)
    fit = ergm_mle(space, xs, **mle_opts)
    pmf = ergm_pmf(space, fit.theta_hat)
    modes = sorted(ergm_mode(space, fit.theta_hat))
    mode_mass = max(pmf[m] for m in modes)
    dist = min(float(np.linalg.norm(np.subtract(m, xs))) for m in modes)
    type2 = fit.converged and xs not in modes and mode_mass > pmf[xs]
    return DegeneracyReport(
        x_star=xs, extended_position=pos, on_extended_boundary=pos != "interior",
        fit=fit, modes=modes, mode_distance=dist, prob_at_x_star=pmf[xs],
        prob_at_mode=mode_mass, type1_degenerate=fit.diverging,
        type2_degenerate=bool(type2), mode_candidates=sorted(ext.mode_candidates()))
