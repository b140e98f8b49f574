"""Kernel mixtures of vMF densities centred on embedded graphs.

``f_hat(y | pi) = sum_k pi_k h_k(y)`` with ``h_k = vMF(y_k, kappa_h)``.  The
weights are chosen to bring ``f_hat`` close to a baseline vMF ``f`` in
KL divergence, estimated on a fixed Monte-Carlo sample.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp

from .errors import InputError, NumericalError
from .graph import Graph, make_graph
from .vmf import VmfParams, log_normalizer, log_sphere_area, vmf_log_density, vmf_sample

SIMPLEX_TOL = 1e-12
DEFAULT_MC = 5000
MIN_MC = 100


def log_kernels(y, atoms, kappa_h: float) -> np.ndarray:
    """``ln h_k(y)`` for every atom; ``y`` may be one point or a matrix of rows."""
    atoms = np.asarray(atoms, dtype=float)
    return log_normalizer(atoms.shape[1], kappa_h) + kappa_h * (np.asarray(y, dtype=float) @ atoms.T)


def _normalize_simplex(pi) -> np.ndarray:
    pi = np.asarray(pi, dtype=float).ravel()
    if np.any(pi < 0) or not np.all(np.isfinite(pi)):
        raise InputError("mixture weights must be finite and non-negative")
    s = pi.sum()
    if abs(s - 1.0) > 1e-6:
        raise InputError(f"mixture weights sum to {s}, not 1")
    return pi / s


@dataclass
class MixtureModel:
    atoms: np.ndarray
    pi: np.ndarray
    kappa_h: float
    baseline: VmfParams
    alpha: float = 0.0
    graph_refs: list[Graph] = field(default_factory=list)

    def __post_init__(self):
        self.atoms = np.atleast_2d(np.asarray(self.atoms, dtype=float))
        self.pi = _normalize_simplex(self.pi)
        if self.pi.size != self.atoms.shape[0]:
            raise InputError("one weight per atom is required")
        if self.atoms.shape[1] != self.baseline.p:
            raise InputError("atoms and baseline live in different dimensions")
        if np.any(np.abs(np.linalg.norm(self.atoms, axis=1) - 1.0) > 1e-9):
            raise InputError("atoms must be unit vectors")
        if not self.kappa_h > 0:
            raise InputError("kernel concentration must be positive")
        if self.alpha < 0:
            raise InputError("DP concentration alpha must be >= 0")
        if self.graph_refs and len(self.graph_refs) != self.K:
            raise InputError("graph_refs must align with atoms")

    @property
    def K(self) -> int:
        return self.atoms.shape[0]

    @property
    def p(self) -> int:
        return self.atoms.shape[1]

    def log_new_graph_score(self) -> float:
        """``ln(alpha / (K + alpha) * u_p)``; ``-inf`` when ``alpha == 0``."""
        if self.alpha == 0:
            return -math.inf
        return math.log(self.alpha / (self.K + self.alpha)) - log_sphere_area(self.p)

    def atom_log_scores(self, y) -> np.ndarray:
        """``ln pi_k + ln h_k(y)``, the unnormalised log posterior over atoms."""
        with np.errstate(divide="ignore"):
            return np.log(self.pi) + log_kernels(y, self.atoms, self.kappa_h)

    def to_dict(self, graph_file: str | None = None) -> dict:
        d = {
            "atoms": self.atoms.tolist(),
            "pi": self.pi.tolist(),
            "kappa_h": self.kappa_h,
            "baseline": self.baseline.to_dict(),
            "alpha": self.alpha,
        }
        if graph_file is not None:
            d["graph_file"] = graph_file
            d["graph_refs"] = list(range(len(self.graph_refs)))
        return d

    def save(self, path: str, graph_path: str | None = None) -> None:
        """Write the model as JSON and, if given, the graphs as JSON lines."""
        import os

        gname = os.path.basename(graph_path) if graph_path else None
        with open(path, "w") as fh:
            json.dump(self.to_dict(gname), fh)
        if graph_path:
            with open(graph_path, "w") as fh:
                for g in self.graph_refs:
                    fh.write(json.dumps({"n": g.n, "edges": [list(e) for e in g.edges()]}) + "\n")

    @classmethod
    def from_dict(cls, d: dict, graphs: list[Graph] | None = None) -> "MixtureModel":
        refs = [graphs[i] for i in d.get("graph_refs", [])] if graphs else []
        return cls(np.array(d["atoms"], dtype=float), np.array(d["pi"], dtype=float),
                   float(d["kappa_h"]), VmfParams.from_dict(d["baseline"]),
                   float(d.get("alpha", 0.0)), refs)

    @classmethod
    def load(cls, path: str) -> "MixtureModel":
        import os

        with open(path) as fh:
            d = json.load(fh)
        graphs = None
        if d.get("graph_file"):
            gpath = os.path.join(os.path.dirname(path), d["graph_file"])
            with open(gpath) as fh:
                graphs = [make_graph(r["n"], r["edges"])
                          for r in map(json.loads, fh) if r]
        return cls.from_dict(d, graphs)


def mixture_log_density(y, model: MixtureModel, include_dp: bool = False) -> float:
    """``ln f_hat(y)``, optionally plus the unnormalised DP new-graph term."""
    y = np.asarray(y, dtype=float).ravel()
    if abs(np.linalg.norm(y) - 1.0) > 1e-6:
        raise InputError("y must be a unit vector")
    s = model.atom_log_scores(y)
    if include_dp and model.alpha > 0:
        s = np.append(s, model.log_new_graph_score())
    return float(logsumexp(s))


def _rotation_apply(mu: np.ndarray, y: np.ndarray, z: np.ndarray) -> np.ndarray:
    """Apply the rotation in span{mu, y} that carries ``mu`` to ``y``, to rows of ``z``."""
    c = float(mu @ y)
    w = y - c * mu
    s = float(np.linalg.norm(w))
    if s < 1e-15:
        return z.copy() if c > 0 else -z
    v = w / s
    a, b = z @ mu, z @ v
    rest = z - np.outer(a, mu) - np.outer(b, v)
    return rest + np.outer(c * a - s * b, mu) + np.outer(s * a + c * b, v)


def _half_turn(mu: np.ndarray, z: np.ndarray) -> np.ndarray:
    """Rotation by pi about the axis ``mu``: ``z -> 2 (mu . z) mu - z``."""
    return 2.0 * np.outer(z @ mu, mu) - z


class KlObjective:
    """Monte-Carlo estimate of ``KL(f_hat(. | pi) || f)`` for fixed atoms.

    The proposal is the defensive mixture ``q = eps f + (1 - eps) mean_k h_k``
    sampled with a fixed share from ``f`` and an equal share from every
    kernel.  Kernel draws reuse one base sample rotated onto each atom, and
    every draw is paired with its half-turn about ``mu``, so that symmetric
    atom sets give exactly symmetric estimates.  With the sample fixed,

        KL_hat(pi) = mean_m [ s_m ln(s_m / b_m) ],   s = A pi,

    where ``A_mk = h_k(z_m) / q(z_m)`` (columns self-normalised to mean 1)
    and ``b_m = f(z_m) / q(z_m)``; this is ``t ln t`` composed with an
    affine map, hence convex in ``pi``.
    Both ratios are bounded (by ``K / (1 - eps)`` and ``1 / eps``), so no
    overflow is possible however sharp the kernels are.
    """

    def __init__(self, atoms, baseline: VmfParams, kappa_h: float,
                 mc_samples: int = DEFAULT_MC, seed=0, defensive: float = 0.5):
        if mc_samples < MIN_MC:
            raise InputError(f"need at least {MIN_MC} Monte-Carlo samples, got {mc_samples}")
        if not kappa_h > 0:
            raise InputError("kernel concentration must be positive")
        if not 0 < defensive <= 1:
            raise InputError("defensive share must lie in (0, 1]")
        self.atoms = np.atleast_2d(np.asarray(atoms, dtype=float))
        if self.atoms.shape[1] != baseline.p:
            raise InputError("atoms and baseline live in different dimensions")
        rng = np.random.default_rng(seed)
        mu = baseline.mu
        K = self.atoms.shape[0]
        n_f = max(1, int(round(defensive * mc_samples)) // 2)
        zf = vmf_sample(baseline, n_f, rng)
        parts = [zf, _half_turn(mu, zf)]
        if defensive < 1:
            n_k = max(1, int(round((1 - defensive) * mc_samples / K)) // 2)
            base = vmf_sample(VmfParams(mu, kappa_h), n_k, rng)
            base = np.vstack([base, _half_turn(mu, base)])
            parts += [_rotation_apply(mu, y, base) for y in self.atoms]
        z = np.vstack(parts)
        z /= np.linalg.norm(z, axis=1, keepdims=True)
        self.z = z
        logh = log_kernels(z, self.atoms, kappa_h)
        logf = vmf_log_density(z, baseline)
        if defensive < 1:
            logq = np.logaddexp(math.log(defensive) + logf,
                                math.log((1 - defensive) / K) + logsumexp(logh, axis=1))
        else:
            logq = logf
        A = np.exp(logh - logq[:, None])
        # each kernel integrates to one exactly; rescaling the columns to
        # match removes the Poisson noise of baseline draws landing inside a
        # sharp kernel, which would otherwise be amplified by ln(pi_k)
        self.A = A / (A.sum(axis=0) / len(z))
        self.log_b = logf - logq

    @property
    def K(self) -> int:
        return self.atoms.shape[0]

    @property
    def M(self) -> int:
        return self.z.shape[0]

    def _s(self, pi):
        return self.A @ np.asarray(pi, dtype=float)

    def value(self, pi) -> float:
        s = self._s(pi)
        pos = s > 0
        return float(np.sum(s[pos] * (np.log(s[pos]) - self.log_b[pos])) / self.M)

    def gradient(self, pi) -> np.ndarray:
        s = self._s(pi)
        lr = np.log(np.maximum(s, 1e-300)) - self.log_b
        return self.A.T @ (lr + 1.0) / self.M


@dataclass
class PiFit:
    pi: np.ndarray
    trace: list[float]
    iterations: int
    converged: bool

    @property
    def objective(self) -> float:
        return self.trace[-1]


def baseline_init(atoms, baseline: VmfParams) -> np.ndarray:
    """Weights proportional to the baseline density at each atom."""
    lf = vmf_log_density(np.atleast_2d(atoms), baseline)
    w = np.exp(lf - lf.max())
    return w / w.sum()


def fit_pi(atoms, baseline: VmfParams, kappa_h: float, mc_samples: int = DEFAULT_MC,
           seed=0, max_iter: int = 500, tol: float = 1e-9, init=None,
           objective: KlObjective | None = None) -> PiFit:
    """Minimise the KL estimate over the simplex by mirror descent.

    Each step is a multiplicative update with rate ``0.5 / (1 + t)`` on the
    gradient centred at its ``pi``-mean and scaled to unit max-norm.  The
    rate is halved until the objective does not increase, which keeps the
    trace monotone.  Stops on a relative change below ``tol``.
    """
    obj = objective or KlObjective(atoms, baseline, kappa_h, mc_samples, seed)
    K = obj.K
    if K == 1:
        return PiFit(np.ones(1), [obj.value(np.ones(1))], 0, True)
    pi = baseline_init(obj.atoms, baseline) if init is None else _normalize_simplex(init)
    cur = obj.value(pi)
    if not math.isfinite(cur):
        raise NumericalError("KL objective is not finite at the starting weights")
    trace = [cur]
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        g = obj.gradient(pi)
        g = g - pi @ g
        scale = np.max(np.abs(g))
        if scale == 0:
            converged = True
            break
        eta = 0.5 / (1 + it - 1)
        accepted = False
        for _ in range(40):
            logits = np.log(np.maximum(pi, 1e-300)) - eta * g / scale
            cand = np.exp(logits - logits.max())
            cand /= cand.sum()
            val = obj.value(cand)
            if val <= cur:
                accepted = True
                break
            eta *= 0.5
        if not accepted:
            converged = True
            break
        change = (cur - val) / max(abs(cur), 1e-300)
        pi, cur = cand, val
        trace.append(cur)
        if change < tol:
            converged = True
            break
    return PiFit(pi, trace, it, converged)
