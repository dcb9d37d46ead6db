"""Poisson spatio-temporal mixed effects model with log-gamma latent processes.

Counts Z_t(l, A) ~ Poisson(exp(Y)), Y = x'beta + psi'eta_t + xi, with
eta_t = M_t eta_{t-1} + W_t^{1/2} w, xi = alpha_k^{1/2} sigma_xi w and
beta = alpha_k^{1/2} sigma_beta w, where each w has independent LG(alpha_k,
kappa_k) coordinates. k = 0 is the standardized (sMLG) variant, k = 1 the
normal-approximating (nMLG) one.
"""
from __future__ import annotations

import hashlib
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import special

from .mi_structures import (
    AdjacencyStructure,
    BasisSet,
    k_star,
    mi_basis,
    mi_operator,
    mi_propagator,
    positive_eigen_count,
    precision_target,
)
from .mlg_conditional import CMLGParams, zero_count_shift
from .mlg_core import ALPHA_G_DEFAULT, k_value, shape_scale

Y_MAX = 700.0
W_EIG_FLOOR = 1e-10


def default_grid() -> np.ndarray:
    return np.round(np.arange(1, 201) * 0.01, 10)


@dataclass
class CountDataset:
    """Observed counts plus the prediction cells they belong to.

    Cells are (variable, region, time) with variable in 1..L, region in
    0..n_regions-1 and time in 1..T. When no prediction cells are given the
    prediction set equals the observed set. Internally cells are sorted by
    (time, variable, region).
    """

    variable: np.ndarray
    region: np.ndarray
    time: np.ndarray
    count: np.ndarray
    pred_variable: np.ndarray | None = None
    pred_region: np.ndarray | None = None
    pred_time: np.ndarray | None = None
    n_regions: int | None = None

    def __post_init__(self):
        v = np.asarray(self.variable, dtype=np.int64).reshape(-1)
        a = np.asarray(self.region, dtype=np.int64).reshape(-1)
        t = np.asarray(self.time, dtype=np.int64).reshape(-1)
        z = np.asarray(self.count)
        if not (v.shape == a.shape == t.shape == z.shape):
            raise ValueError("variable, region, time and count must have equal lengths")
        if v.size == 0:
            raise ValueError("no observations")
        if np.issubdtype(z.dtype, np.floating):
            if np.any(~np.isfinite(z)) or np.any(z != np.round(z)):
                raise ValueError("counts must be integers")
        z = z.astype(np.int64)
        if np.any(z < 0):
            raise ValueError("counts must be nonnegative")
        if self.pred_variable is None:
            pv, pa, pt = v.copy(), a.copy(), t.copy()
        else:
            pv = np.asarray(self.pred_variable, dtype=np.int64).reshape(-1)
            pa = np.asarray(self.pred_region, dtype=np.int64).reshape(-1)
            pt = np.asarray(self.pred_time, dtype=np.int64).reshape(-1)
        for name, arr in (("variable", v), ("time", t), ("variable", pv), ("time", pt)):
            if np.any(arr < 1):
                raise ValueError(f"{name} indices start at 1")
        if np.any(a < 0) or np.any(pa < 0):
            raise ValueError("region indices start at 0")

        order = np.lexsort((a, v, t))
        v, a, t, z = v[order], a[order], t[order], z[order]
        porder = np.lexsort((pa, pv, pt))
        pv, pa, pt = pv[porder], pa[porder], pt[porder]
        _check_unique(v, a, t, "observation")
        _check_unique(pv, pa, pt, "prediction cell")

        nreg = int(max(a.max(), pa.max()) + 1) if self.n_regions is None else int(self.n_regions)
        if max(a.max(), pa.max()) >= nreg:
            raise ValueError("region index exceeds n_regions")
        obs_key = _cell_key(v, a, t, nreg)
        pred_key = _cell_key(pv, pa, pt, nreg)
        pos = np.searchsorted(pred_key, obs_key)
        if np.any(pos >= pred_key.size) or np.any(pred_key[np.minimum(pos, pred_key.size - 1)] != obs_key):
            raise ValueError("every observed cell must also be a prediction cell")

        self.variable, self.region, self.time, self.count = v, a, t, z
        self.pred_variable, self.pred_region, self.pred_time = pv, pa, pt
        self.n_regions = nreg
        self._obs_pos = pos
        T = int(pt.max())
        self._obs_slices = [np.flatnonzero(t == s) for s in range(1, T + 1)]
        self._pred_slices = [np.flatnonzero(pt == s) for s in range(1, T + 1)]
        for s, sl in enumerate(self._pred_slices, 1):
            if sl.size == 0:
                raise ValueError(f"time {s} has no prediction cells (times must run 1..T)")
        # rows of each time's prediction block that are observed
        self._obs_rows = [pos[o] - p[0] for o, p in zip(self._obs_slices, self._pred_slices)]

    @property
    def L(self) -> int:
        return int(self.pred_variable.max())

    @property
    def T(self) -> int:
        return len(self._pred_slices)

    @property
    def n(self) -> int:
        return int(self.count.size)

    @property
    def n_t(self) -> np.ndarray:
        return np.array([s.size for s in self._obs_slices])

    @property
    def N_t(self) -> np.ndarray:
        return np.array([s.size for s in self._pred_slices])

    @property
    def N(self) -> int:
        return int(self.pred_time.size)

    def counts_at(self, t: int) -> np.ndarray:
        return self.count[self._obs_slices[t - 1]]

    def obs_index(self, t: int) -> np.ndarray:
        return self._obs_slices[t - 1]

    def pred_index(self, t: int) -> np.ndarray:
        return self._pred_slices[t - 1]

    def obs_rows(self, t: int) -> np.ndarray:
        """Positions of time-t observed cells within the time-t prediction block."""
        return self._obs_rows[t - 1]

    @property
    def obs_in_pred(self) -> np.ndarray:
        """Position of each observed cell in the global prediction ordering."""
        return self._obs_pos

    def observed_sets(self) -> dict:
        """D_O per (variable, time) as sorted region arrays."""
        return _group_regions(self.variable, self.region, self.time)

    def prediction_sets(self) -> dict:
        return _group_regions(self.pred_variable, self.pred_region, self.pred_time)

    def pred_cells(self) -> np.ndarray:
        return np.column_stack([self.pred_variable, self.pred_region, self.pred_time])


def _cell_key(v, a, t, nreg):
    # integer key increasing in (time, variable, region), matching the sort order
    return (t.astype(np.int64) * 1_000_003 + v) * (nreg + 1) + a


def _check_unique(v, a, t, what):
    if v.size < 2:
        return
    dup = (np.diff(v) == 0) & (np.diff(a) == 0) & (np.diff(t) == 0)
    if np.any(dup):
        i = int(np.flatnonzero(dup)[0])
        raise ValueError(f"duplicate {what} (variable={v[i]}, region={a[i]}, time={t[i]})")


def _group_regions(v, a, t):
    out = {}
    for key in sorted(set(zip(v.tolist(), t.tolist()))):
        mask = (v == key[0]) & (t == key[1])
        out[key] = np.sort(a[mask])
    return out


@dataclass
class ModelSpec:
    X: list[np.ndarray]                # observed-cell design per time, n_t x p
    XP: list[np.ndarray]               # prediction-cell design per time, N_t x p
    basis: BasisSet
    obs_rows: list[np.ndarray]
    k_flag: str = "sMLG"
    sigma_beta: float = 10.0
    sigmaK_grid: np.ndarray = field(default_factory=default_grid)
    sigmaXi_grid: np.ndarray = field(default_factory=default_grid)
    alpha_G: float = ALPHA_G_DEFAULT

    def __post_init__(self):
        k_value(self.k_flag)
        for name in ("sigmaK_grid", "sigmaXi_grid"):
            g = np.atleast_1d(np.asarray(getattr(self, name), dtype=float))
            if g.size == 0 or np.any(g <= 0) or np.any(np.diff(g) <= 0):
                raise ValueError(f"{name} must be positive and strictly increasing")
            setattr(self, name, g)
        if not self.sigma_beta > 0 or not self.alpha_G > 0:
            raise ValueError("sigma_beta and alpha_G must be > 0")
        T = len(self.XP)
        if not (len(self.X) == len(self.obs_rows) == len(self.basis.Psi) == T):
            raise ValueError("per-time lists must all have length T")
        p = self.XP[0].shape[1]
        for t in range(T):
            if self.XP[t].shape[1] != p or self.X[t].shape[1] != p:
                raise ValueError("design matrices must share p columns")
            if self.basis.Psi[t].shape != (self.XP[t].shape[0], self.basis.r):
                raise ValueError(f"basis at time {t + 1} has the wrong shape")
        self._Psi_obs = [self.basis.Psi[t][self.obs_rows[t]] for t in range(T)]
        self._keig = []
        for K in self.basis.Kstar:
            if K.size == 0:
                self._keig.append((np.zeros(0), np.zeros((0, 0))))
                continue
            lam, U = np.linalg.eigh(0.5 * (K + K.T))
            if lam.min() < -1e-8 * max(1.0, lam.max()):
                raise np.linalg.LinAlgError("K* is not positive semidefinite")
            self._keig.append((np.maximum(lam, W_EIG_FLOOR), U))

    @property
    def T(self) -> int:
        return len(self.XP)

    @property
    def p(self) -> int:
        return self.XP[0].shape[1]

    @property
    def r(self) -> int:
        return self.basis.r

    @property
    def k(self) -> int:
        return k_value(self.k_flag)

    @property
    def alpha_k(self) -> float:
        return shape_scale(self.k, self.alpha_G)[0]

    @property
    def kappa_k(self) -> float:
        return shape_scale(self.k, self.alpha_G)[1]

    def Psi_obs(self, t: int) -> np.ndarray:
        return self._Psi_obs[t - 1]

    def M(self, t: int) -> np.ndarray:
        return self.basis.M[t - 1]

    def _w_scale(self, sigmaK):
        return self.alpha_G ** (0.5 * self.k) * sigmaK

    def W(self, t: int, sigmaK: float) -> np.ndarray:
        return self.alpha_G ** self.k * sigmaK ** 2 * self.basis.Kstar[t - 1]

    def W_half(self, t: int, sigmaK: float) -> np.ndarray:
        lam, U = self._keig[t - 1]
        return self._w_scale(sigmaK) * (U * np.sqrt(lam)) @ U.T

    def W_inv_half(self, t: int, sigmaK: float) -> np.ndarray:
        lam, U = self._keig[t - 1]
        return (U / np.sqrt(lam)) @ U.T / self._w_scale(sigmaK)

    def W_logdet_half(self, t: int, sigmaK: float) -> float:
        lam, _ = self._keig[t - 1]
        return self.r * np.log(self._w_scale(sigmaK)) + 0.5 * np.sum(np.log(lam))

    def with_k(self, k_flag) -> "ModelSpec":
        if k_flag is None or k_value(k_flag) == self.k:
            return self
        return replace(self, k_flag="sMLG" if k_value(k_flag) == 0 else "nMLG")

    def fingerprint(self) -> str:
        h = hashlib.sha256()
        for arrs in (self.X, self.XP, self.basis.Psi, self.basis.Kstar,
                     [m for m in self.basis.M if m is not None], self.obs_rows):
            for a in arrs:
                h.update(np.ascontiguousarray(a, dtype=float).tobytes())
                h.update(str(a.shape).encode())
        h.update(np.ascontiguousarray(self.sigmaK_grid).tobytes())
        h.update(np.ascontiguousarray(self.sigmaXi_grid).tobytes())
        h.update(f"{self.k}|{self.sigma_beta!r}|{self.alpha_G!r}".encode())
        return h.hexdigest()[:16]


def multivariate_adjacency(variables, regions, adjacency: AdjacencyStructure,
                           cross_variable_links: bool = True) -> np.ndarray:
    """Adjacency among the cells (variable, region) of one time point."""
    A = adjacency.matrix()
    v = np.asarray(variables)
    a = np.asarray(regions)
    out = A[np.ix_(a, a)] * (v[:, None] == v[None, :])
    if cross_variable_links:
        out = out + ((a[:, None] == a[None, :]) & (v[:, None] != v[None, :]))
    return out.astype(float)


def design_matrix(variables, L: int, extra=None, variable_effects: bool = True) -> np.ndarray:
    """Intercept, indicators for variables 2..L, then any extra covariate columns."""
    v = np.asarray(variables)
    cols = [np.ones(v.size)]
    if variable_effects:
        cols += [(v == l).astype(float) for l in range(2, L + 1)]
    X = np.column_stack(cols)
    if extra is not None:
        extra = np.asarray(extra, dtype=float).reshape(v.size, -1)
        X = np.column_stack([X, extra])
    return X


def build_model_spec(data: CountDataset, adjacency: AdjacencyStructure, *, covariates=None,
                     r: int | None = None, k_flag="sMLG", precision: str = "identity_minus_adjacency",
                     cross_variable_links: bool = True, variable_effects: bool = True,
                     sigma_beta: float = 10.0, sigmaK_grid=None, sigmaXi_grid=None,
                     alpha_G: float = ALPHA_G_DEFAULT, propagator_weights=None) -> ModelSpec:
    """Assemble designs, MI bases, propagators and K* for every time point.

    ``covariates`` (optional) has one row per prediction cell in the
    dataset's (time, variable, region) order.
    """
    if adjacency.n_regions < data.n_regions:
        raise ValueError("adjacency has fewer regions than the data")
    L = data.L
    extra = None if covariates is None else np.asarray(covariates, dtype=float).reshape(data.N, -1)
    XP, X, Psi, M, Kstar, A_list = [], [], [], [], [], []
    for t in range(1, data.T + 1):
        idx = data.pred_index(t)
        Xt = design_matrix(data.pred_variable[idx], L, None if extra is None else extra[idx],
                           variable_effects)
        if np.linalg.matrix_rank(Xt) < Xt.shape[1]:
            raise ValueError(f"prediction design at time {t} is rank deficient")
        XP.append(Xt)
        X.append(Xt[data.obs_rows(t)])
        A_list.append(multivariate_adjacency(data.pred_variable[idx], data.pred_region[idx],
                                             adjacency, cross_variable_links))
    if r is None:
        npos = positive_eigen_count(mi_operator(XP[0], A_list[0]))
        if npos == 0:
            raise ValueError("MI operator has no positive eigenvalues")
        r = max(1, int(np.ceil(0.1 * npos)))
    cache = {}
    for t in range(data.T):
        key = (XP[t].tobytes(), A_list[t].tobytes())
        if key not in cache:
            Pt = mi_basis(XP[t], A_list[t], r)
            Qt = precision_target(A_list[t], precision)
            cache[key] = (Pt, k_star(Pt, Qt), mi_propagator(Pt, XP[t], propagator_weights))
        Pt, Kt, Mt = cache[key]
        Psi.append(Pt)
        Kstar.append(Kt)
        M.append(None if t == 0 else Mt)
    basis = BasisSet(Psi=Psi, M=M, Kstar=Kstar, r=r)
    return ModelSpec(
        X=X, XP=XP, basis=basis, obs_rows=[data.obs_rows(t) for t in range(1, data.T + 1)],
        k_flag="sMLG" if k_value(k_flag) == 0 else "nMLG", sigma_beta=sigma_beta,
        sigmaK_grid=default_grid() if sigmaK_grid is None else sigmaK_grid,
        sigmaXi_grid=default_grid() if sigmaXi_grid is None else sigmaXi_grid,
        alpha_G=alpha_G,
    )


@dataclass
class ChainState:
    beta: np.ndarray
    eta: list[np.ndarray]
    xi: list[np.ndarray]
    sigmaK: float
    sigmaXi: float

    def copy(self) -> "ChainState":
        return ChainState(self.beta.copy(), [e.copy() for e in self.eta],
                          [x.copy() for x in self.xi], self.sigmaK, self.sigmaXi)


def initial_state(data: CountDataset, spec: ModelSpec, ridge: float = 1e-3) -> ChainState:
    """Ridge fit of log(Z + 1) on X for beta, zeros elsewhere, grid medians for sigmas."""
    X = np.vstack(spec.X)
    y = np.log(np.concatenate([data.counts_at(t) for t in range(1, spec.T + 1)]) + 1.0)
    beta = np.linalg.solve(X.T @ X + ridge * np.eye(spec.p), X.T @ y)
    eta = [np.zeros(spec.r) for _ in range(spec.T)]
    xi = [np.zeros(x.shape[0]) for x in spec.X]
    gK, gX = spec.sigmaK_grid, spec.sigmaXi_grid
    return ChainState(beta, eta, xi, float(gK[(gK.size - 1) // 2]), float(gX[(gX.size - 1) // 2]))


def _check_time(spec: ModelSpec, t: int) -> None:
    if not 1 <= t <= spec.T:
        raise ValueError(f"time index {t} outside 1..{spec.T}")


def _check_state(state: ChainState, spec: ModelSpec) -> None:
    if state.beta.shape != (spec.p,) or len(state.eta) != spec.T or len(state.xi) != spec.T:
        raise ValueError("state dimensions do not match the model")
    for t in range(spec.T):
        if state.eta[t].shape != (spec.r,) or state.xi[t].shape != (spec.X[t].shape[0],):
            raise ValueError(f"state block at time {t + 1} has the wrong shape")


def linear_predictor(state: ChainState, spec: ModelSpec, t: int) -> np.ndarray:
    """Y at the observed cells of time t."""
    return spec.X[t - 1] @ state.beta + spec.Psi_obs(t) @ state.eta[t - 1] + state.xi[t - 1]


def fc_beta(state: ChainState, data: CountDataset, spec: ModelSpec, check_rank: bool = False) -> CMLGParams:
    _check_state(state, spec)
    a, kap = spec.alpha_k, spec.kappa_k
    scale = np.sqrt(a) * spec.sigma_beta
    Z = np.concatenate([data.counts_at(t) for t in range(1, spec.T + 1)])
    offs = np.concatenate([spec.Psi_obs(t) @ state.eta[t - 1] + state.xi[t - 1]
                           for t in range(1, spec.T + 1)])
    Xall = np.vstack(spec.X)
    s = scale * Xall.sum(axis=0)
    d = zero_count_shift(a, s, bool(np.any(Z == 0)))
    H = np.vstack([Xall, np.eye(spec.p) / scale])
    alpha = np.concatenate([Z + d, a - d * s])
    lk = np.concatenate([offs, np.full(spec.p, -np.log(kap))])
    return CMLGParams(H, alpha, lk, check_rank=check_rank)


def fc_eta(state: ChainState, data: CountDataset, spec: ModelSpec, t: int,
           check_rank: bool = False) -> CMLGParams:
    _check_time(spec, t)
    _check_state(state, spec)
    a, kap = spec.alpha_k, spec.kappa_k
    T, r = spec.T, spec.r
    Psi = spec.Psi_obs(t)
    Z = data.counts_at(t)
    has_zero = bool(np.any(Z == 0))
    Winv = spec.W_inv_half(t, state.sigmaK)
    Wh = spec.W_half(t, state.sigmaK)
    prior_mean = np.zeros(r) if t == 1 else spec.M(t) @ state.eta[t - 2]
    s1 = Psi.sum(axis=0) @ Wh

    blocks_H = [Psi, Winv]
    blocks_lk = [spec.X[t - 1] @ state.beta + state.xi[t - 1],
                 np.full(r, -np.log(kap)) - Winv @ prior_mean]
    forward = None
    if t < T:
        Mn = spec.M(t + 1)
        Winv_n = spec.W_inv_half(t + 1, state.sigmaK)
        Hf = -Winv_n @ Mn
        if np.linalg.matrix_rank(Mn) == r:
            # row sums of the shape shift routed through the forward block
            s2 = -Psi.sum(axis=0) @ np.linalg.solve(Mn, spec.W_half(t + 1, state.sigmaK))
            forward = s2
        blocks_H.append(Hf)
        blocks_lk.append(np.full(r, -np.log(kap)) + Winv_n @ state.eta[t])

    if forward is not None:
        d = zero_count_shift(a, np.concatenate([s1, forward]), has_zero)
        shapes = [Z + d, a - 0.5 * d * s1, a - 0.5 * d * forward]
    else:
        d = zero_count_shift(a, s1, has_zero)
        shapes = [Z + d, a - d * s1]
        if t < T:
            shapes.append(np.full(r, a))
    return CMLGParams(np.vstack(blocks_H), np.concatenate(shapes), np.concatenate(blocks_lk),
                      check_rank=check_rank)


def fc_xi(state: ChainState, data: CountDataset, spec: ModelSpec, t: int,
          check_rank: bool = False) -> CMLGParams:
    _check_time(spec, t)
    _check_state(state, spec)
    n_t = spec.X[t - 1].shape[0]
    if n_t == 0:
        raise ValueError(f"no observed cells at time {t}")
    a, kap = spec.alpha_k, spec.kappa_k
    scale = np.sqrt(a) * state.sigmaXi
    Z = data.counts_at(t)
    d = zero_count_shift(a, [scale], bool(np.any(Z == 0)))
    I = np.eye(n_t)
    H = np.vstack([I, I / scale])
    alpha = np.concatenate([Z + d, np.full(n_t, a - d * scale)])
    lk = np.concatenate([spec.X[t - 1] @ state.beta + spec.Psi_obs(t) @ state.eta[t - 1],
                         np.full(n_t, -np.log(kap))])
    return CMLGParams(H, alpha, lk, check_rank=check_rank)


@dataclass(frozen=True)
class GridPMF:
    grid: np.ndarray
    prob: np.ndarray
    log_weight: np.ndarray

    def sample(self, rng: np.random.Generator) -> float:
        c = np.cumsum(self.prob)
        i = int(np.searchsorted(c, rng.random() * c[-1], side="right"))
        return float(self.grid[min(i, self.grid.size - 1)])


def normalize_log_weights(grid, logw) -> GridPMF:
    logw = np.asarray(logw, dtype=float)
    if not np.any(np.isfinite(logw)):
        raise FloatingPointError("all grid log-weights are -inf")
    top = np.max(logw[np.isfinite(logw)])
    w = np.exp(logw - top)
    return GridPMF(np.asarray(grid, dtype=float), w / w.sum(), logw)


def sigmaK_log_weights(state: ChainState, spec: ModelSpec) -> np.ndarray:
    """Log of prod_t MLG(eta_t; M_t eta_{t-1}, W_t(sigma)^{1/2}) on the sigma_K grid."""
    a, kap = spec.alpha_k, spec.kappa_k
    grid = spec.sigmaK_grid
    base = spec.alpha_G ** (0.5 * spec.k)
    const = -special.gammaln(a) - a * np.log(kap)
    logw = np.zeros(grid.size)
    for t in range(1, spec.T + 1):
        lam, U = spec._keig[t - 1]
        prev = np.zeros(spec.r) if t == 1 else spec.M(t) @ state.eta[t - 2]
        u = (U / np.sqrt(lam)) @ U.T @ (state.eta[t - 1] - prev) / base
        z = u[:, None] / grid[None, :]
        with np.errstate(over="ignore"):
            logw += (-spec.r * np.log(base * grid) - 0.5 * np.sum(np.log(lam)) + spec.r * const
                     + a * z.sum(axis=0) - np.exp(z).sum(axis=0) / kap)
    return logw


def sigmaXi_log_weights(state: ChainState, spec: ModelSpec) -> np.ndarray:
    """Log of prod_t MLG(xi_t; 0, alpha_k^{1/2} sigma I) on the sigma_xi grid."""
    a, kap = spec.alpha_k, spec.kappa_k
    grid = spec.sigmaXi_grid
    xi = np.concatenate(state.xi) if state.xi else np.zeros(0)
    n = xi.size
    scale = np.sqrt(a) * grid
    z = xi[:, None] / scale[None, :]
    const = -special.gammaln(a) - a * np.log(kap)
    with np.errstate(over="ignore"):
        return -n * np.log(scale) + n * const + a * z.sum(axis=0) - np.exp(z).sum(axis=0) / kap


def fc_sigma_K(state: ChainState, spec: ModelSpec) -> GridPMF:
    return normalize_log_weights(spec.sigmaK_grid, sigmaK_log_weights(state, spec))


def fc_sigma_xi(state: ChainState, spec: ModelSpec) -> GridPMF:
    return normalize_log_weights(spec.sigmaXi_grid, sigmaXi_log_weights(state, spec))


def log_likelihood(state: ChainState, data: CountDataset, spec: ModelSpec) -> float:
    total = 0.0
    for t in range(1, spec.T + 1):
        Z = data.counts_at(t)
        if Z.size == 0:
            continue
        Y = linear_predictor(state, spec, t)
        if np.any(Y > Y_MAX):
            return -np.inf
        total += float(np.sum(Z * Y - np.exp(Y) - special.gammaln(Z + 1.0)))
    return total


def _as_states(draws) -> list[ChainState]:
    if isinstance(draws, ChainState):
        return [draws]
    out = []
    for d in draws:
        if isinstance(d, ChainState):
            out.append(d)
        elif hasattr(d, "states"):
            out.extend(d.states())
        else:
            out.extend(_as_states(d))
    return out


def compute_dic(draws, data: CountDataset, spec: ModelSpec) -> float:
    """2 mean(D) - D(posterior mean), with D = -2 log-likelihood."""
    states = _as_states(draws)
    if not states:
        raise ValueError("no draws")
    dev = np.array([-2.0 * log_likelihood(s, data, spec) for s in states])
    mean_state = ChainState(
        np.mean([s.beta for s in states], axis=0),
        [np.mean([s.eta[t] for s in states], axis=0) for t in range(spec.T)],
        [np.mean([s.xi[t] for s in states], axis=0) for t in range(spec.T)],
        states[0].sigmaK, states[0].sigmaXi,
    )
    return float(2.0 * dev.mean() + 2.0 * log_likelihood(mean_state, data, spec))
