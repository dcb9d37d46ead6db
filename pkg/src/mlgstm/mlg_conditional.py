"""Conditional log-gamma blocks.

A conditional MLG (cMLG) density on R^g has the form

    f(q) ∝ exp{ alpha' H q - kappa_inv' exp(H q) }

with H an m x g matrix of full column rank. Conditionals of an MLG vector
and all full conditionals of the count model are of this form. ``kappa_inv``
is kept on the log scale.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import linalg

from . import logconcave
from .mlg_core import MLGParams, k_value, log_gamma_variates

RANK_TOL = 1e-10
DEFAULT_SWEEPS = 20


class RankError(np.linalg.LinAlgError):
    pass


def _check_rank(H: np.ndarray) -> None:
    r = np.linalg.qr(H, mode="r")
    d = np.abs(np.diag(r))
    if d.size == 0 or d.max() == 0 or np.any(d < RANK_TOL * d.max()):
        raise RankError(f"H ({H.shape[0]}x{H.shape[1]}) does not have full column rank")


@dataclass(frozen=True)
class CMLGParams:
    H: np.ndarray
    alpha: np.ndarray
    log_kappa_inv: np.ndarray
    check_rank: bool = field(default=True, repr=False, compare=False)

    def __post_init__(self):
        H = np.atleast_2d(np.asarray(self.H, dtype=float))
        m, g = H.shape
        alpha = np.asarray(self.alpha, dtype=float).reshape(-1)
        lk = np.asarray(self.log_kappa_inv, dtype=float).reshape(-1)
        if m < g:
            raise ValueError(f"H must have at least as many rows as columns, got {H.shape}")
        if alpha.shape != (m,) or lk.shape != (m,):
            raise ValueError(f"alpha and log_kappa_inv must have length {m}")
        if np.any(~np.isfinite(alpha)) or np.any(alpha <= 0):
            raise ValueError("alpha entries must be finite and > 0")
        if np.any(~np.isfinite(lk)):
            raise ValueError("log_kappa_inv entries must be finite")
        if self.check_rank:
            _check_rank(H)
        object.__setattr__(self, "H", H)
        object.__setattr__(self, "alpha", alpha)
        object.__setattr__(self, "log_kappa_inv", lk)

    @property
    def m(self) -> int:
        return self.H.shape[0]

    @property
    def g(self) -> int:
        return self.H.shape[1]

    @property
    def kappa_inv(self) -> np.ndarray:
        return np.exp(self.log_kappa_inv)

    def log_kernel(self, q) -> np.ndarray | float:
        """Unnormalized log density alpha'Hq - kappa_inv'exp(Hq)."""
        q = np.asarray(q, dtype=float)
        hq = q @ self.H.T
        with np.errstate(over="ignore"):
            return hq @ self.alpha - np.exp(hq + self.log_kappa_inv).sum(axis=-1)


def zero_count_shift(alpha_k: float, row_sums, has_zero: bool) -> float:
    """Shape offset d that keeps every shape positive when counts contain zeros.

    d = alpha_k / (1 + max|row_sums|) if any count is zero, else 0. Adding d to
    the data shapes and subtracting d * row_sums from the prior shapes leaves
    the density unchanged.
    """
    if not has_zero:
        return 0.0
    rs = np.abs(np.asarray(row_sums, dtype=float).reshape(-1))
    top = rs.max() if rs.size else 0.0
    return float(alpha_k) / (1.0 + top)


def conditional_params(joint: MLGParams, partition_g: int, q2) -> CMLGParams:
    """Law of the first g coordinates of an MLG vector given the rest equal q2."""
    m = joint.m
    g = int(partition_g)
    if not 0 < g < m:
        raise ValueError(f"partition must satisfy 0 < g < m={m}, got {g}")
    q2 = np.asarray(q2, dtype=float).reshape(-1)
    if q2.shape != (m - g,):
        raise ValueError(f"q2 must have length {m - g}")
    lu = linalg.lu_factor(joint.V, check_finite=False)
    Vinv = linalg.lu_solve(lu, np.eye(m), check_finite=False)
    H, B = Vinv[:, :g], Vinv[:, g:]
    lk = B @ q2 - Vinv @ joint.c - np.log(joint.kappa)
    return CMLGParams(H, joint.alpha, lk)


def _lg_draws(params: CMLGParams, rng: np.random.Generator, size=None) -> np.ndarray:
    shape = (params.m,) if size is None else (size, params.m)
    # log kappa = -log kappa_inv
    return log_gamma_variates(params.alpha, rng, size=shape) - params.log_kappa_inv


def project_mmlg(params: CMLGParams, rng: np.random.Generator | None = None, w=None,
                 size: int | None = None) -> np.ndarray:
    """Least-squares projection (H'H)^-1 H'w of independent log-gamma draws w.

    Computed from a thin QR of H. With ``w`` given the map is deterministic.
    For square H this is an exact draw from the block; for taller H it is the
    marginal of an augmented vector and is only an approximation to the
    conditional density.
    """
    if w is None:
        if rng is None:
            raise ValueError("need rng or w")
        w = _lg_draws(params, rng, size)
    w = np.asarray(w, dtype=float)
    Q, R = np.linalg.qr(params.H)
    d = np.abs(np.diag(R))
    if np.any(d < RANK_TOL * d.max()):
        raise RankError("H does not have full column rank")
    rhs = Q.T @ w.T
    return linalg.solve_triangular(R, rhs, check_finite=False).T


def _row_guess(params: CMLGParams) -> np.ndarray:
    """Least-squares fit of Hq to the row-wise modes log(alpha) - log kappa_inv."""
    y = np.log(params.alpha) - params.log_kappa_inv
    return np.linalg.lstsq(params.H, y, rcond=None)[0]


def block_mode(params: CMLGParams, q0=None, tol=1e-10, max_iter=100) -> tuple[np.ndarray, np.ndarray]:
    """Mode and negative Hessian at the mode (damped Newton on a concave target)."""
    H, a, lk = params.H, params.alpha, params.log_kappa_inv
    q = _row_guess(params) if q0 is None else np.array(q0, dtype=float)
    f = params.log_kernel(q)
    for _ in range(max_iter):
        with np.errstate(over="ignore"):
            e = np.exp(H @ q + lk)
        grad = H.T @ (a - e)
        info = (H.T * e) @ H
        try:
            step = np.linalg.solve(info, grad)
        except np.linalg.LinAlgError:
            step = np.linalg.lstsq(info, grad, rcond=None)[0]
        t = 1.0
        while True:
            qn = q + t * step
            fn = params.log_kernel(qn)
            if np.isfinite(fn) and fn >= f - 1e-12 * abs(f):
                break
            t *= 0.5
            if t < 1e-12:
                qn, fn = q, f
                break
        done = np.max(np.abs(qn - q)) <= tol * (1.0 + np.max(np.abs(q)))
        q, f = qn, fn
        if done:
            break
    e = np.exp(H @ q + lk)
    info = (H.T * e) @ H
    return q, 0.5 * (info + info.T)


def _separable_columns(H: np.ndarray):
    """If every row of H has at most one nonzero, return its column index per row."""
    nz = H != 0
    if np.any(nz.sum(axis=1) > 1):
        return None
    if not np.all(nz.any(axis=0)):
        return None
    return np.argmax(nz, axis=1)


def _sample_separable(params: CMLGParams, cols: np.ndarray, rng) -> np.ndarray:
    g = params.g
    rows = np.arange(params.m)
    order = np.argsort(cols, kind="stable")
    counts = np.bincount(cols, minlength=g)
    R = counts.max()
    b = np.zeros((g, R))
    logk = np.full((g, R), -np.inf)
    a = np.zeros(g)
    pos = np.zeros(params.m, dtype=int)
    start = np.concatenate([[0], np.cumsum(counts)[:-1]])
    pos[order] = np.arange(params.m) - start[cols[order]]
    coef = params.H[rows, cols]
    b[cols, pos] = coef
    logk[cols, pos] = params.log_kappa_inv
    np.add.at(a, cols, params.alpha * coef)
    # start Newton from the per-coordinate least-squares row guess
    y = np.log(params.alpha) - params.log_kappa_inv
    num = np.zeros(g)
    den = np.zeros(g)
    np.add.at(num, cols, coef * y)
    np.add.at(den, cols, coef * coef)
    return logconcave.sample(a, b, logk, rng, x0=num / den)


def line_sweep(params: CMLGParams, q, rng: np.random.Generator, axes: np.ndarray,
               centre: np.ndarray | None = None) -> np.ndarray:
    """One pass of exact one-dimensional conditional draws along each column of ``axes``."""
    H, a, lk = params.H, params.alpha, params.log_kappa_inv
    q = np.array(q, dtype=float)
    hq = H @ q
    for j in range(axes.shape[1]):
        v = axes[:, j]
        b = H @ v
        guess = None if centre is None else np.array([v @ (centre - q)])
        t = logconcave.sample(np.array([a @ b]), b[None, :], (lk + hq)[None, :], rng, x0=guess)[0]
        q += t * v
        hq += t * b
    return q


def principal_axes(params: CMLGParams) -> tuple[np.ndarray, np.ndarray]:
    """Mode and eigenvectors of the Laplace covariance at the mode."""
    mode, info = block_mode(params)
    _, vecs = np.linalg.eigh(info)
    return mode, vecs


def update_mmlg(params: CMLGParams, current, rng: np.random.Generator) -> np.ndarray:
    """Gibbs-block update that leaves the cMLG density invariant.

    Square, one-column and row-separable H get an independent exact draw.
    Otherwise one sweep of exact line updates starts from ``current``.
    """
    kind = _kind(params)
    if kind != "general":
        return _exact_draw(params, rng, kind)
    # axes depend on the block only, so the sweep leaves the density invariant
    mode, axes = principal_axes(params)
    return line_sweep(params, current, rng, axes, centre=mode)


def _kind(params: CMLGParams):
    if params.m == params.g:
        return "square"
    if params.g == 1:
        return "line"
    cols = _separable_columns(params.H)
    if cols is not None:
        return ("separable", cols)
    return "general"


def _exact_draw(params: CMLGParams, rng, kind, size=None) -> np.ndarray:
    if kind == "square":
        return project_mmlg(params, rng, size=size)
    if kind == "line":
        b = params.H[:, 0]
        n = 1 if size is None else int(size)
        x = logconcave.sample(np.full(n, params.alpha @ b), np.tile(b, (n, 1)),
                              np.tile(params.log_kappa_inv, (n, 1)), rng,
                              x0=np.full(n, _row_guess(params)[0]))
        return x if size is None else x[:, None]
    if size is None:
        return _sample_separable(params, kind[1], rng)
    return np.array([_sample_separable(params, kind[1], rng) for _ in range(int(size))])


def sample_mmlg(params: CMLGParams, rng: np.random.Generator, size: int | None = None,
                n_sweeps: int = DEFAULT_SWEEPS) -> np.ndarray:
    """Draw from the cMLG density; with ``size`` the result has shape (size, g).

    Exact for square H (projection of log-gamma draws), for g = 1 and for H
    whose rows each touch one coordinate (vectorized rejection sampling). For
    other shapes each draw is the end point of ``n_sweeps`` exact line-update
    sweeps started from a projection draw.
    """
    kind = _kind(params)
    if kind != "general":
        return _exact_draw(params, rng, kind, size)
    mode, axes = principal_axes(params)
    n = 1 if size is None else int(size)
    Q = project_mmlg(params, rng, size=n)
    H, a, lk = params.H, params.alpha, params.log_kappa_inv
    for _ in range(n_sweeps):
        # independent chains advanced together, one vectorized line draw per axis
        for j in range(axes.shape[1]):
            v = axes[:, j]
            b = H @ v
            t = logconcave.sample(np.full(n, a @ b), np.tile(b, (n, 1)), lk + Q @ H.T, rng,
                                  x0=(mode - Q) @ v)
            Q += np.outer(t, v)
    return Q[0] if size is None else Q


def poisson_conjugate_params(Z, prior: MLGParams, k_flag) -> CMLGParams:
    """Posterior block for q when Z_i ~ Poisson(exp(q_i)) and q ~ MLG(c, W, alpha_k, kappa_k).

    H = [I; W^-1], shapes (Z + d, alpha_k - d 1'W), log kappa_inv =
    (0, -log kappa_k - W^-1 c).
    """
    Z = np.asarray(Z).reshape(-1)
    if np.any(Z < 0):
        raise ValueError("counts must be nonnegative")
    m = prior.m
    if Z.shape != (m,):
        raise ValueError(f"Z must have length {m}")
    k_value(k_flag)
    alpha_k = float(prior.alpha[0])
    kappa_k = float(prior.kappa[0])
    if not (np.allclose(prior.alpha, alpha_k) and np.allclose(prior.kappa, kappa_k)):
        raise ValueError("prior must have constant shape and scale vectors")
    W = prior.V
    lu = linalg.lu_factor(W, check_finite=False)
    Winv = linalg.lu_solve(lu, np.eye(m), check_finite=False)
    colsum = W.sum(axis=0)
    d = zero_count_shift(alpha_k, colsum, bool(np.any(Z == 0)))
    H = np.vstack([np.eye(m), Winv])
    alpha = np.concatenate([Z + d, alpha_k - d * colsum])
    lk = np.concatenate([np.zeros(m), -np.log(kappa_k) - Winv @ prior.c])
    return CMLGParams(H, alpha, lk)
