"""von Mises-Fisher distribution on the unit sphere S^{p-1}."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln, ive

from .errors import InputError, NumericalError

UNIT_TOL = 1e-6
MAX_REJECTIONS = 10**6


def log_bessel_iv(nu: float, x: float) -> float:
    """``ln I_nu(x)`` for ``nu >= 0``, ``x >= 0`` without overflow.

    Uses the exponentially scaled Bessel function and falls back to the
    power series when the scaled value underflows (tiny ``x``).
    """
    if x < 0:
        raise InputError("log_bessel_iv needs x >= 0")
    if x == 0:
        return 0.0 if nu == 0 else -math.inf
    v = float(ive(nu, x))
    if v > 0 and math.isfinite(v):
        return math.log(v) + x
    # (x/2)^nu / Gamma(nu+1) * sum_k (x^2/4)^k / (k! (nu+1)_k)
    q = x * x / 4.0
    term, total = 1.0, 1.0
    for k in range(1, 500):
        term *= q / (k * (nu + k))
        total += term
        if term < 1e-17 * total:
            break
    return nu * math.log(x / 2.0) - float(gammaln(nu + 1.0)) + math.log(total)


def log_sphere_area(p: int) -> float:
    """``ln`` of the surface area of S^{p-1} in R^p.

    Small ``p`` uses the recursion ``A_p = 2 pi A_{p-2} / (p - 2)`` from
    ``A_2 = 2 pi`` and ``A_3 = 4 pi``, so that ``p = 3`` gives ``ln(4 pi)``
    to the last bit; large ``p`` goes through ``gammaln``.
    """
    if p < 2:
        raise InputError("sphere dimension needs p >= 2")
    if p <= 100:
        area = 2.0 * math.pi if p % 2 == 0 else 4.0 * math.pi
        for q in range(4 if p % 2 == 0 else 5, p + 1, 2):
            area *= 2.0 * math.pi / (q - 2)
        return math.log(area)
    return math.log(2.0) + 0.5 * p * math.log(math.pi) - float(gammaln(0.5 * p))


def log_normalizer(p: int, kappa: float) -> float:
    """``ln C_p(kappa)``; the uniform density when ``kappa == 0``."""
    if kappa == 0:
        return -log_sphere_area(p)
    nu = 0.5 * p - 1.0
    return nu * math.log(kappa) - 0.5 * p * math.log(2 * math.pi) - log_bessel_iv(nu, kappa)


def mean_resultant_length(p: int, kappa: float) -> float:
    """``A_p(kappa) = I_{p/2}(kappa) / I_{p/2-1}(kappa)``."""
    if kappa == 0:
        return 0.0
    return math.exp(log_bessel_iv(0.5 * p, kappa) - log_bessel_iv(0.5 * p - 1, kappa))


@dataclass(frozen=True)
class VmfParams:
    mu: np.ndarray
    kappa: float

    def __post_init__(self):
        mu = np.asarray(self.mu, dtype=float).ravel()
        if mu.size < 2:
            raise InputError("vMF needs dimension p >= 2")
        if abs(np.linalg.norm(mu) - 1.0) > 1e-9:
            raise InputError("vMF mean direction must be a unit vector")
        if not (math.isfinite(self.kappa) and self.kappa >= 0):
            raise InputError("kappa must be finite and non-negative")
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "kappa", float(self.kappa))

    @property
    def p(self) -> int:
        return self.mu.size

    def to_dict(self) -> dict:
        return {"mu": self.mu.tolist(), "kappa": self.kappa}

    @classmethod
    def from_dict(cls, d: dict) -> "VmfParams":
        return cls(np.array(d["mu"], dtype=float), d["kappa"])


def _check_unit(y: np.ndarray) -> None:
    norms = np.linalg.norm(y, axis=-1)
    if np.any(np.abs(norms - 1.0) > UNIT_TOL):
        raise InputError("points must lie on the unit sphere")


def vmf_log_density(y, params: VmfParams) -> float | np.ndarray:
    """Log density at one point (shape ``(p,)``) or at each row of ``y``."""
    y = np.asarray(y, dtype=float)
    if y.shape[-1] != params.p:
        raise InputError("point dimension does not match vMF dimension")
    _check_unit(y)
    out = log_normalizer(params.p, params.kappa) + params.kappa * (y @ params.mu)
    return float(out) if np.ndim(out) == 0 else out


def _householder_to(mu: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Rotate rows of ``x`` so that the last basis vector maps onto ``mu``."""
    p = mu.size
    e = np.zeros(p)
    e[-1] = 1.0
    u = e - mu
    nu = np.linalg.norm(u)
    if nu < 1e-15:
        return x
    u /= nu
    return x - 2.0 * np.outer(x @ u, u)


def _wood_cosines(kappa: float, p: int, size: int, rng: np.random.Generator) -> np.ndarray:
    m = p - 1
    # b = (-2k + sqrt(4k^2 + m^2)) / m, rewritten to avoid cancellation
    b = m / (2.0 * kappa + math.sqrt(4.0 * kappa * kappa + m * m))
    x0 = (1.0 - b) / (1.0 + b)
    c = kappa * x0 + m * math.log(1.0 - x0 * x0)
    out = np.empty(size)
    filled = 0
    tries = 0
    while filled < size:
        need = size - filled
        z = rng.beta(m / 2.0, m / 2.0, size=need)
        w = (1.0 - (1.0 + b) * z) / (1.0 - (1.0 - b) * z)
        u = rng.random(need)
        ok = kappa * w + m * np.log(1.0 - x0 * w) - c >= np.log(u)
        acc = w[ok]
        out[filled:filled + acc.size] = acc
        filled += acc.size
        tries += need
        if tries > MAX_REJECTIONS * max(size, 1):
            raise NumericalError("vMF rejection sampler failed to accept")
    return out


def vmf_sample(params: VmfParams, size: int | None = None, seed=None) -> np.ndarray:
    """Exact draws by Wood's rejection scheme.

    Returns shape ``(p,)`` when ``size`` is None, otherwise ``(size, p)``.
    ``seed`` may be an int or a ``numpy.random.Generator``.
    """
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    n = 1 if size is None else int(size)
    p = params.p
    if params.kappa == 0:
        x = rng.standard_normal((n, p))
        x /= np.linalg.norm(x, axis=1, keepdims=True)
    else:
        w = _wood_cosines(params.kappa, p, n, rng)
        v = rng.standard_normal((n, p - 1))
        v /= np.linalg.norm(v, axis=1, keepdims=True)
        x = np.column_stack([np.sqrt(np.clip(1.0 - w * w, 0.0, None))[:, None] * v, w])
        x = _householder_to(params.mu, x)
        x /= np.linalg.norm(x, axis=1, keepdims=True)
    return x[0] if size is None else x


def kappa_mle(mu, points) -> float:
    """Concentration estimate ``(p-1) / (2 (1 - mu . mean(points)))``."""
    mu = np.asarray(mu, dtype=float).ravel()
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    if pts.size == 0:
        raise InputError("kappa_mle needs at least one point")
    if pts.shape[1] != mu.size:
        raise InputError("point dimension does not match mu")
    rbar = float(mu @ pts.mean(axis=0))
    if rbar >= 1.0 - 1e-12:
        raise InputError("concentration is undefined: all points coincide with mu")
    return (mu.size - 1) / (2.0 * (1.0 - rbar))
