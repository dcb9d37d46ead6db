"""Univariate and multivariate log-gamma distributions.

A log-gamma variate is q = log(g) with g ~ Gamma(shape=alpha, scale=kappa).
Its density is exp{alpha*q - exp(q)/kappa} / (Gamma(alpha) * kappa**alpha).
A multivariate log-gamma (MLG) vector is q = c + V w with independent
log-gamma coordinates w_i ~ LG(alpha_i, kappa_i).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import linalg, special

ALPHA_G_DEFAULT = 1000.0
_RCOND_MIN = 1e-12
_SMALL_SHAPE = 0.2


def digamma(x):
    """omega_0, the first derivative of log Gamma."""
    return special.digamma(x)


def trigamma(x):
    """omega_1, the second derivative of log Gamma."""
    return special.polygamma(1, x)


def polygamma(j: int, x):
    """omega_j elementwise for j in {0, 1} (higher orders passed through)."""
    if j == 0:
        return digamma(x)
    return special.polygamma(j, x)


@dataclass(frozen=True)
class LGParams:
    alpha: float
    kappa: float = 1.0

    def __post_init__(self):
        if not (np.isfinite(self.alpha) and self.alpha > 0):
            raise ValueError(f"alpha must be finite and > 0, got {self.alpha}")
        if not (np.isfinite(self.kappa) and self.kappa > 0):
            raise ValueError(f"kappa must be finite and > 0, got {self.kappa}")

    @property
    def mean(self) -> float:
        return float(digamma(self.alpha) + np.log(self.kappa))

    @property
    def var(self) -> float:
        return float(trigamma(self.alpha))


def _check_mixing(V: np.ndarray) -> None:
    if not np.all(np.isfinite(V)):
        raise ValueError("V has non-finite entries")
    s = np.linalg.svd(V, compute_uv=False)
    if s[0] == 0 or s[-1] / s[0] < _RCOND_MIN:
        raise np.linalg.LinAlgError(
            "V is singular or too ill-conditioned (reciprocal condition below 1e-12)"
        )


@dataclass(frozen=True)
class MLGParams:
    """MLG(c, V, alpha, kappa): the law of c + V w, w_i ~ LG(alpha_i, kappa_i)."""

    c: np.ndarray
    V: np.ndarray
    alpha: np.ndarray
    kappa: np.ndarray

    def __post_init__(self):
        c = np.atleast_1d(np.asarray(self.c, dtype=float))
        V = np.atleast_2d(np.asarray(self.V, dtype=float))
        m = c.shape[0]
        alpha = np.broadcast_to(np.asarray(self.alpha, dtype=float), (m,)).copy()
        kappa = np.broadcast_to(np.asarray(self.kappa, dtype=float), (m,)).copy()
        if c.ndim != 1 or V.shape != (m, m):
            raise ValueError(f"V must be {m}x{m} to match c, got {V.shape}")
        if np.any(~np.isfinite(alpha)) or np.any(alpha <= 0):
            raise ValueError("alpha entries must be finite and > 0")
        if np.any(~np.isfinite(kappa)) or np.any(kappa <= 0):
            raise ValueError("kappa entries must be finite and > 0")
        _check_mixing(V)
        object.__setattr__(self, "c", c)
        object.__setattr__(self, "V", V)
        object.__setattr__(self, "alpha", alpha)
        object.__setattr__(self, "kappa", kappa)

    @property
    def m(self) -> int:
        return self.c.shape[0]


def log_gamma_variates(alpha, rng: np.random.Generator, size=None) -> np.ndarray:
    """log of Gamma(alpha, 1) draws, safe for tiny shapes.

    For alpha < 0.2 the draw is built as log G(alpha + 1) + log(U) / alpha, which
    never underflows to log(0).
    """
    alpha = np.asarray(alpha, dtype=float)
    if size is None:
        size = alpha.shape
    a = np.broadcast_to(alpha, size)
    small = a < _SMALL_SHAPE
    if not np.any(small):
        return np.log(rng.standard_gamma(a))
    boosted = np.where(small, a + 1.0, a)
    out = np.log(rng.standard_gamma(boosted))
    u = rng.random(size)
    with np.errstate(divide="ignore"):
        out = out + np.where(small, np.log(u) / a, 0.0)
    return out


def sample_lg(params: LGParams, rng: np.random.Generator, size=None):
    """log of a Gamma(shape=alpha, scale=kappa) draw."""
    q = log_gamma_variates(params.alpha, rng, size=size) + np.log(params.kappa)
    if size is None:
        return float(q)
    return q


def mlg_sample(params: MLGParams, rng: np.random.Generator, size: int | None = None,
               w: np.ndarray | None = None) -> np.ndarray:
    """Draw q = c + V w. With ``size`` the result has shape (size, m).

    Passing ``w`` skips the random part and returns the affine image.
    """
    if w is None:
        shape = (params.m,) if size is None else (size, params.m)
        w = log_gamma_variates(params.alpha, rng, size=shape) + np.log(params.kappa)
    w = np.asarray(w, dtype=float)
    return params.c + w @ params.V.T


def lg_logpdf(q, alpha, kappa=1.0):
    q = np.asarray(q, dtype=float)
    return alpha * q - np.exp(q) / kappa - special.gammaln(alpha) - alpha * np.log(kappa)


def mlg_logpdf(params: MLGParams, q) -> np.ndarray | float:
    """Log density of MLG(c, V, alpha, kappa) at q (shape (m,) or (n, m))."""
    q = np.asarray(q, dtype=float)
    lu, piv = linalg.lu_factor(params.V, check_finite=False)
    logdet = np.sum(np.log(np.abs(np.diag(lu))))
    resid = np.atleast_2d(q - params.c)
    w = linalg.lu_solve((lu, piv), resid.T, check_finite=False).T
    const = -logdet - np.sum(special.gammaln(params.alpha) + params.alpha * np.log(params.kappa))
    out = const + w @ params.alpha - np.exp(w) @ (1.0 / params.kappa)
    if q.ndim == 1:
        return float(out[0])
    return out


def mlg_mean_cov(params: MLGParams) -> tuple[np.ndarray, np.ndarray]:
    mean = params.c + params.V @ (digamma(params.alpha) + np.log(params.kappa))
    cov = (params.V * trigamma(params.alpha)) @ params.V.T
    cov = 0.5 * (cov + cov.T)
    return mean, cov


def tetragamma(x):
    return special.polygamma(2, x)


def solve_alpha_star(tol: float = 1e-12) -> float:
    """Root of trigamma(a) = 1 by safeguarded Newton on the bracket [1, 2]."""
    lo, hi = 1.0, 2.0  # trigamma(1) = pi^2/6 > 1 > trigamma(2)
    a = 1.5
    for _ in range(200):
        f = float(trigamma(a)) - 1.0
        if abs(f) < tol:
            return a
        if f > 0:
            lo = a
        else:
            hi = a
        step = f / float(tetragamma(a))
        nxt = a - step
        if not (lo < nxt < hi):
            nxt = 0.5 * (lo + hi)
        a = nxt
    return a


ALPHA_STAR = solve_alpha_star()
KAPPA_STAR = float(np.exp(-digamma(ALPHA_STAR)))


def make_smlg(c, V) -> MLGParams:
    """Standardized MLG: mean c and covariance V V'."""
    c = np.atleast_1d(np.asarray(c, dtype=float))
    m = c.shape[0]
    return MLGParams(c, V, np.full(m, ALPHA_STAR), np.full(m, KAPPA_STAR))


def make_nmlg(c, V, alpha_G: float = ALPHA_G_DEFAULT) -> MLGParams:
    """Normal-approximating MLG(c, sqrt(alpha_G) V, alpha_G, 1/alpha_G)."""
    if not alpha_G > 0:
        raise ValueError("alpha_G must be > 0")
    c = np.atleast_1d(np.asarray(c, dtype=float))
    m = c.shape[0]
    V = np.sqrt(alpha_G) * np.atleast_2d(np.asarray(V, dtype=float))
    return MLGParams(c, V, np.full(m, float(alpha_G)), np.full(m, 1.0 / alpha_G))


def shape_scale(k_flag, alpha_G: float = ALPHA_G_DEFAULT) -> tuple[float, float]:
    """(alpha_k, kappa_k) for k = 0 (sMLG) or k = 1 (nMLG)."""
    k = k_value(k_flag)
    if k == 0:
        return ALPHA_STAR, KAPPA_STAR
    return float(alpha_G), 1.0 / alpha_G


def k_value(k_flag) -> int:
    if k_flag in (0, "sMLG", "smlg"):
        return 0
    if k_flag in (1, "nMLG", "nmlg"):
        return 1
    raise ValueError(f"k_flag must be 'sMLG' or 'nMLG', got {k_flag!r}")
