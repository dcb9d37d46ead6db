"""Gibbs sampler for the count model, convergence diagnostics and summaries."""
from __future__ import annotations

import concurrent.futures
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .mlg_conditional import project_mmlg, update_mmlg
from .mlg_core import log_gamma_variates
from .pmstm import (
    Y_MAX,
    ChainState,
    CountDataset,
    ModelSpec,
    compute_dic,
    fc_beta,
    fc_eta,
    fc_sigma_K,
    fc_sigma_xi,
    fc_xi,
    initial_state,
    linear_predictor,
)

LOG_FORMAT = "mlgstm-chain-log v1"
MAX_OVERFLOW_SWEEPS = 25


class NumericalFailure(RuntimeError):
    pass


@dataclass
class SamplerConfig:
    iterations: int = 10000
    burn_in: int = 2000
    thin: int = 1
    chains: int = 3
    seed: int = 0
    k_flag: str | None = None
    block_sampler: str = "exact"
    n_jobs: int = 1

    def __post_init__(self):
        if self.iterations < 1 or not 0 <= self.burn_in < self.iterations:
            raise ValueError("need 0 <= burn_in < iterations")
        if self.thin < 1 or self.chains < 1:
            raise ValueError("thin and chains must be >= 1")
        if self.block_sampler not in ("exact", "projection"):
            raise ValueError("block_sampler must be 'exact' or 'projection'")
        if not 0 <= int(self.seed) < 2 ** 64:
            raise ValueError("seed must be a 64-bit unsigned integer")


@dataclass
class ChainResult:
    chain_id: int
    seed: int
    beta: np.ndarray          # (S, p)
    eta: np.ndarray           # (S, T, r)
    xi: np.ndarray            # (S, n), observed cells in dataset order
    sigmaK: np.ndarray
    sigmaXi: np.ndarray
    pred: np.ndarray          # (S, N) draws of exp(Y) at prediction cells
    loglik: np.ndarray
    trace: list[str] = field(default_factory=list)
    overflow_sweeps: int = 0
    spec: ModelSpec | None = field(default=None, repr=False)

    @property
    def n_draws(self) -> int:
        return self.beta.shape[0]

    def state(self, i: int, spec: ModelSpec) -> ChainState:
        cuts = np.cumsum([x.shape[0] for x in spec.X])[:-1]
        return ChainState(self.beta[i].copy(), [e.copy() for e in self.eta[i]],
                          [x.copy() for x in np.split(self.xi[i], cuts)],
                          float(self.sigmaK[i]), float(self.sigmaXi[i]))

    def states(self, spec: ModelSpec | None = None):
        spec = self.spec if spec is None else spec
        return [self.state(i, spec) for i in range(self.n_draws)]


def sweep_steps(T: int, r: int = 1, n_t=None) -> list[str]:
    """Block order of one sweep."""
    steps = ["beta"]
    if r > 0:
        steps += [f"eta_{t}" for t in range(1, T + 1)]
    steps += [f"xi_{t}" for t in range(1, T + 1) if n_t is None or n_t[t - 1] > 0]
    if r > 0:
        steps.append("sigmaK")
    steps.append("sigmaXi")
    return steps


def _draw(params, current, rng, method):
    if method == "projection":
        return project_mmlg(params, rng)
    return update_mmlg(params, current, rng)


def gibbs_sweep(state: ChainState, data: CountDataset, spec: ModelSpec,
                rng: np.random.Generator, method: str = "exact", trace: list | None = None) -> ChainState:
    """One pass over all blocks, updating ``state`` in place."""
    def mark(name):
        if trace is not None:
            trace.append(name)

    state.beta = _draw(fc_beta(state, data, spec), state.beta, rng, method)
    mark("beta")
    if spec.r > 0:
        for t in range(1, spec.T + 1):
            state.eta[t - 1] = _draw(fc_eta(state, data, spec, t), state.eta[t - 1], rng, method)
            mark(f"eta_{t}")
    for t in range(1, spec.T + 1):
        if spec.X[t - 1].shape[0] == 0:
            continue
        state.xi[t - 1] = _draw(fc_xi(state, data, spec, t), state.xi[t - 1], rng, method)
        mark(f"xi_{t}")
    if spec.r > 0:
        state.sigmaK = fc_sigma_K(state, spec).sample(rng)
        mark("sigmaK")
    state.sigmaXi = fc_sigma_xi(state, spec).sample(rng)
    mark("sigmaXi")
    return state


def chain_rng(seed: int, chain_id: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(seed), int(chain_id)]))


def predict_exp_y(state: ChainState, data: CountDataset, spec: ModelSpec,
                  rng: np.random.Generator) -> np.ndarray:
    """exp(Y) at every prediction cell; unobserved cells get a fresh xi from its prior."""
    out = np.empty(data.N)
    scale = np.sqrt(spec.alpha_k) * state.sigmaXi
    for t in range(1, spec.T + 1):
        idx = data.pred_index(t)
        y = spec.XP[t - 1] @ state.beta + spec.basis.Psi[t - 1] @ state.eta[t - 1]
        xi = scale * (log_gamma_variates(np.full(idx.size, spec.alpha_k), rng) + np.log(spec.kappa_k))
        xi[spec.obs_rows[t - 1]] = state.xi[t - 1]
        out[idx] = np.exp(np.minimum(y + xi, Y_MAX))
    return out


def _max_y(state, spec):
    m = -np.inf
    for t in range(1, spec.T + 1):
        if spec.X[t - 1].shape[0]:
            m = max(m, float(np.max(linear_predictor(state, spec, t))))
    return m


def run_chain(spec: ModelSpec, data: CountDataset, cfg: SamplerConfig, chain_id: int = 0,
              log_path=None, record_trace: bool = False, init: ChainState | None = None) -> ChainResult:
    """Run one chain and keep post-burn-in draws at the thinning interval."""
    from .pmstm import log_likelihood

    spec = spec.with_k(cfg.k_flag)
    rng = chain_rng(cfg.seed, chain_id)
    state = initial_state(data, spec) if init is None else init.copy()
    n_keep = len(range(cfg.burn_in, cfg.iterations, cfg.thin))
    n = sum(x.shape[0] for x in spec.X)
    beta = np.empty((n_keep, spec.p))
    eta = np.empty((n_keep, spec.T, spec.r))
    xi = np.empty((n_keep, n))
    sK = np.empty(n_keep)
    sX = np.empty(n_keep)
    pred = np.empty((n_keep, data.N))
    ll = np.empty(n_keep)
    trace: list[str] = []
    writer = ChainLogWriter(log_path, spec, cfg.seed, chain_id) if log_path else None
    overflow = 0
    streak = 0
    j = 0
    try:
        for it in range(cfg.iterations):
            gibbs_sweep(state, data, spec, rng, cfg.block_sampler,
                        trace if (record_trace and it == 0) else None)
            if _max_y(state, spec) > Y_MAX:
                overflow += 1
                streak += 1
                if streak >= MAX_OVERFLOW_SWEEPS:
                    raise NumericalFailure(
                        f"chain {chain_id}: linear predictor above {Y_MAX} for "
                        f"{streak} consecutive sweeps (iteration {it})")
            else:
                streak = 0
            if it >= cfg.burn_in and (it - cfg.burn_in) % cfg.thin == 0:
                beta[j] = state.beta
                eta[j] = np.array(state.eta).reshape(spec.T, spec.r)
                xi[j] = np.concatenate(state.xi) if n else np.zeros(0)
                sK[j] = state.sigmaK
                sX[j] = state.sigmaXi
                pred[j] = predict_exp_y(state, data, spec, rng)
                ll[j] = log_likelihood(state, data, spec)
                if writer:
                    writer.append(it, state)
                j += 1
    finally:
        if writer:
            writer.close()
    return ChainResult(chain_id, int(cfg.seed), beta, eta, xi, sK, sX, pred, ll, trace, overflow, spec)


def _run_one(args):
    spec, data, cfg, cid, log_path = args
    return run_chain(spec, data, cfg, cid, log_path)


def run_chains(spec: ModelSpec, data: CountDataset, cfg: SamplerConfig, log_dir=None) -> list[ChainResult]:
    jobs = []
    for cid in range(cfg.chains):
        lp = None if log_dir is None else Path(log_dir) / f"chain_{cid}.log"
        jobs.append((spec, data, cfg, cid, lp))
    if cfg.n_jobs > 1 and cfg.chains > 1:
        with concurrent.futures.ProcessPoolExecutor(max_workers=cfg.n_jobs) as ex:
            return list(ex.map(_run_one, jobs))
    return [_run_one(j) for j in jobs]


def gelman_rubin(chains) -> float:
    """Potential scale reduction sqrt((W + B/n) / W) for m >= 2 chains of length n."""
    x = np.asarray(chains, dtype=float)
    if x.ndim != 2 or x.shape[0] < 2:
        raise ValueError("need at least two chains of equal length")
    m, n = x.shape
    if n < 10:
        raise ValueError("chains must have length >= 10")
    W = float(np.mean(np.var(x, axis=1, ddof=1)))
    if W <= 0:
        raise ValueError("zero within-chain variance")
    b_over_n = float(np.var(x.mean(axis=1), ddof=1))
    return float(np.sqrt((W + b_over_n) / W))


def batch_means_mcse(draws, batch_size: int = 50) -> float:
    """Standard error of the mean from non-overlapping batch means."""
    x = np.asarray(draws, dtype=float).reshape(-1)
    if batch_size < 1:
        raise ValueError("batch_size must be >= 1")
    nb = x.size // batch_size
    if nb < 2:
        raise ValueError(f"need at least {2 * batch_size} draws, got {x.size}")
    means = x[: nb * batch_size].reshape(nb, batch_size).mean(axis=1)
    return float(np.std(means, ddof=1) / np.sqrt(nb))


@dataclass
class PosteriorSummary:
    cells: np.ndarray              # (N, 3) variable, region, time
    pred_mean: np.ndarray
    pred_sd: np.ndarray
    pred_q025: np.ndarray
    pred_q975: np.ndarray
    param_names: list[str]
    param_mean: np.ndarray
    param_sd: np.ndarray
    param_q025: np.ndarray
    param_q975: np.ndarray
    rhat: dict[str, float]
    mcse: dict[str, float]
    dic: float
    n_draws: int


def parameter_columns(spec: ModelSpec) -> list[str]:
    names = [f"beta[{j + 1}]" for j in range(spec.p)]
    names += [f"eta[{t + 1}][{j + 1}]" for t in range(spec.T) for j in range(spec.r)]
    return names + ["sigmaK", "sigmaXi"]


def parameter_matrix(res: ChainResult) -> np.ndarray:
    S = res.n_draws
    return np.column_stack([res.beta, res.eta.reshape(S, -1), res.sigmaK, res.sigmaXi])


def monitored(spec: ModelSpec, seed: int, n_eta: int = 10) -> list[str]:
    """Every beta, both sigmas and up to n_eta randomly keyed eta coordinates."""
    names = [f"beta[{j + 1}]" for j in range(spec.p)] + ["sigmaK", "sigmaXi"]
    total = spec.T * spec.r
    if total:
        rng = np.random.default_rng(np.random.SeedSequence([int(seed), 0x5EED]))
        pick = np.sort(rng.choice(total, size=min(n_eta, total), replace=False))
        names += [f"eta[{k // spec.r + 1}][{k % spec.r + 1}]" for k in pick]
    return names


def summarize(chains: list[ChainResult], data: CountDataset, spec: ModelSpec) -> PosteriorSummary:
    if not chains or any(c.n_draws == 0 for c in chains):
        raise ValueError("no draws to summarize")
    spec = chains[0].spec or spec
    pred = np.concatenate([c.pred for c in chains], axis=0)
    names = parameter_columns(spec)
    mats = [parameter_matrix(c) for c in chains]
    allp = np.concatenate(mats, axis=0)
    q = np.quantile(pred, [0.025, 0.975], axis=0)
    pq = np.quantile(allp, [0.025, 0.975], axis=0)
    rhat, mcse = {}, {}
    col = {n: i for i, n in enumerate(names)}
    for name in monitored(spec, chains[0].seed):
        i = col[name]
        series = np.array([m[:, i] for m in mats])
        try:
            rhat[name] = gelman_rubin(series) if len(chains) >= 2 else float("nan")
        except ValueError:
            rhat[name] = float("nan")
        try:
            mcse[name] = batch_means_mcse(series.reshape(-1))
        except ValueError:
            mcse[name] = float("nan")
    dic = compute_dic([c.states(spec) for c in chains], data, spec)
    return PosteriorSummary(
        cells=data.pred_cells(), pred_mean=pred.mean(axis=0),
        pred_sd=pred.std(axis=0, ddof=1) if pred.shape[0] > 1 else np.zeros(data.N),
        pred_q025=q[0], pred_q975=q[1], param_names=names, param_mean=allp.mean(axis=0),
        param_sd=allp.std(axis=0, ddof=1) if allp.shape[0] > 1 else np.zeros(len(names)),
        param_q025=pq[0], param_q975=pq[1], rhat=rhat, mcse=mcse, dic=dic, n_draws=pred.shape[0],
    )


class ChainLogWriter:
    """Append-only text log of one chain's stored draws.

    Layout: comment lines ``# key=value`` (format, spec hash, seed, chain,
    dimensions), one CSV header line, then one row per stored draw with the
    sweep index followed by the parameter columns in 17 significant digits.
    """

    def __init__(self, path, spec: ModelSpec, seed: int, chain_id: int):
        self.path = Path(path)
        self.fh = self.path.open("w")
        self.fh.write(f"# format={LOG_FORMAT}\n# spec_hash={spec.fingerprint()}\n")
        self.fh.write(f"# seed={int(seed)}\n# chain={int(chain_id)}\n")
        self.fh.write(f"# dims=p:{spec.p},r:{spec.r},T:{spec.T}\n")
        self.fh.write("iteration," + ",".join(parameter_columns(spec)) + "\n")

    def append(self, iteration: int, state: ChainState) -> None:
        vals = np.concatenate([state.beta, np.concatenate(state.eta) if state.eta else [],
                               [state.sigmaK, state.sigmaXi]])
        self.fh.write(str(iteration) + "," + ",".join(f"{v:.17g}" for v in vals) + "\n")

    def close(self) -> None:
        self.fh.close()


def read_chain_log(path) -> tuple[dict, list[str], np.ndarray]:
    """Return (header fields, column names, draws) from a chain log."""
    path = Path(path)
    meta = {}
    with path.open() as fh:
        lines = fh.read().splitlines()
    i = 0
    while i < len(lines) and lines[i].startswith("#"):
        key, _, val = lines[i][1:].strip().partition("=")
        meta[key] = val
        i += 1
    if meta.get("format") != LOG_FORMAT:
        raise ValueError(f"{path}: not a chain log ({LOG_FORMAT})")
    if i >= len(lines):
        raise ValueError(f"{path}: missing column header")
    cols = lines[i].split(",")[1:]
    rows = [ln.split(",")[1:] for ln in lines[i + 1:] if ln]
    draws = np.array(rows, dtype=float) if rows else np.zeros((0, len(cols)))
    return meta, cols, draws


def diagnose_logs(paths, batch_size: int = 50) -> dict[str, tuple[float, float]]:
    """R-hat and batch-means MCSE for every column shared by the chain logs."""
    logs = [read_chain_log(p) for p in paths]
    if not logs:
        raise ValueError("no chain logs")
    cols = logs[0][1]
    n = min(d.shape[0] for _, _, d in logs)
    out = {}
    for j, name in enumerate(cols):
        series = np.array([d[:n, j] for _, _, d in logs])
        try:
            rh = gelman_rubin(series) if len(logs) >= 2 else float("nan")
        except ValueError:
            rh = float("nan")
        try:
            se = batch_means_mcse(series.reshape(-1), batch_size)
        except ValueError:
            se = float("nan")
        out[name] = (rh, se)
    return out
