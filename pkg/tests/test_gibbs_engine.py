import math

import numpy as np
import pytest

from mlgstm.gibbs_engine import (
    ChainLogWriter,
    NumericalFailure,
    SamplerConfig,
    batch_means_mcse,
    diagnose_logs,
    gelman_rubin,
    gibbs_sweep,
    monitored,
    parameter_columns,
    read_chain_log,
    run_chain,
    run_chains,
    summarize,
    sweep_steps,
)
from mlgstm.mlg_core import ALPHA_STAR
from mlgstm.pmstm import initial_state, linear_predictor
from oracles import tiny_model

GRID = np.arange(1, 201) * 0.01


def _toy(k_flag="sMLG", T=2):
    rng = np.random.default_rng(0)
    Psi = np.linalg.qr(rng.normal(size=(6, 2)))[0]
    Z = rng.poisson(4, size=(T, 6))
    return tiny_model(Z, Psi, M=np.array([[0.9, 0.1], [0.0, 0.8]]), k_flag=k_flag,
                      sigmaK_grid=GRID, sigmaXi_grid=GRID)


def test_config_validation():
    with pytest.raises(ValueError):
        SamplerConfig(iterations=10, burn_in=10)
    with pytest.raises(ValueError):
        SamplerConfig(block_sampler="gibbs")
    with pytest.raises(ValueError):
        SamplerConfig(seed=-1)


def test_one_stored_draw():
    data, spec = _toy()
    res = run_chain(spec, data, SamplerConfig(iterations=4, burn_in=3, chains=1))
    assert res.n_draws == 1 and res.beta.shape == (1, 1) and res.eta.shape == (1, 2, 2)


def test_bitwise_determinism_and_chain_keys():
    data, spec = _toy()
    cfg = SamplerConfig(iterations=30, burn_in=10, chains=2, seed=42)
    a = run_chains(spec, data, cfg)
    b = run_chains(spec, data, cfg)
    for x, y in zip(a, b):
        for f in ("beta", "eta", "xi", "sigmaK", "sigmaXi", "pred"):
            assert np.array_equal(getattr(x, f), getattr(y, f))
    assert not np.array_equal(a[0].beta, a[1].beta)


def test_parallel_matches_serial():
    data, spec = _toy()
    cfg = SamplerConfig(iterations=20, burn_in=5, chains=2, seed=3)
    par = run_chains(spec, data, SamplerConfig(iterations=20, burn_in=5, chains=2, seed=3, n_jobs=2))
    ser = run_chains(spec, data, cfg)
    for x, y in zip(ser, par):
        assert np.array_equal(x.eta, y.eta)


def test_sweep_trace_order():
    data, spec = _toy(T=3)
    res = run_chain(spec, data, SamplerConfig(iterations=2, burn_in=1, chains=1), record_trace=True)
    assert res.trace == sweep_steps(3, 2)
    assert res.trace == ["beta", "eta_1", "eta_2", "eta_3", "xi_1", "xi_2", "xi_3", "sigmaK", "sigmaXi"]


def test_sigma_draws_on_grid():
    data, spec = _toy()
    res = run_chain(spec, data, SamplerConfig(iterations=60, burn_in=0, chains=1, seed=1))
    for s in np.concatenate([res.sigmaK, res.sigmaXi]):
        assert np.min(np.abs(GRID - s)) == 0


@pytest.mark.parametrize("method", ["exact", "projection"])
@pytest.mark.parametrize("k_flag", ["sMLG", "nMLG"])
def test_sweep_runs_for_each_variant(method, k_flag):
    data, spec = _toy(k_flag)
    st = initial_state(data, spec)
    gibbs_sweep(st, data, spec, np.random.default_rng(0), method)
    assert np.all(np.isfinite(st.beta)) and all(np.all(np.isfinite(e)) for e in st.eta)


def test_overflow_raises_numerical_failure():
    data, spec = tiny_model([[0, 0]], np.array([[1.0], [-1.0]]) / math.sqrt(2))
    st = initial_state(data, spec)
    st.beta = np.array([800.0])
    import mlgstm.gibbs_engine as ge
    orig = ge.gibbs_sweep

    def stuck(state, *a, **k):
        state.beta = np.array([800.0])
        return state

    ge.gibbs_sweep = stuck
    try:
        with pytest.raises(NumericalFailure):
            run_chain(spec, data, SamplerConfig(iterations=40, burn_in=0, chains=1), init=st)
    finally:
        ge.gibbs_sweep = orig


def test_gelman_rubin_examples():
    x = np.random.default_rng(0).normal(size=1000)
    assert gelman_rubin([x, x]) == 1.0
    z = np.random.default_rng(1).normal(size=20000)
    assert gelman_rubin([z[:10000], z[10000:]]) < 1.02
    assert gelman_rubin([x, x + 10]) > 1.1
    with pytest.raises(ValueError):
        gelman_rubin([x])
    with pytest.raises(ValueError):
        gelman_rubin([np.ones(50), np.ones(50)])


def test_batch_means_examples():
    x = np.random.default_rng(2).normal(size=10_000)
    se = batch_means_mcse(x)
    assert abs(se / (x.std() / 100) - 1) < 0.2
    assert batch_means_mcse(np.ones(500)) == 0.0
    assert np.isfinite(batch_means_mcse(x, batch_size=5000))
    with pytest.raises(ValueError):
        batch_means_mcse(x[:60], 50)


def test_summary_single_draw_is_that_draw():
    data, spec = _toy()
    res = run_chain(spec, data, SamplerConfig(iterations=3, burn_in=2, chains=1))
    s = summarize([res], data, spec)
    assert np.array_equal(s.pred_mean, res.pred[0])
    st = res.state(0, spec)
    for t in (1, 2):
        idx = data.pred_index(t)
        np.testing.assert_allclose(s.pred_mean[idx], np.exp(linear_predictor(st, spec, t)), rtol=1e-14)
    assert np.all(s.pred_mean > 0)


def test_summary_fields():
    data, spec = _toy()
    chains = run_chains(spec, data, SamplerConfig(iterations=220, burn_in=100, chains=2, seed=5))
    s = summarize(chains, data, spec)
    assert s.n_draws == 240
    assert set(s.rhat) == set(monitored(spec, 5))
    assert np.all(s.pred_q025 <= s.pred_mean) and np.all(s.pred_mean <= s.pred_q975)
    assert np.all(s.pred_mean > 0) and np.isfinite(s.dic)
    assert s.param_names == parameter_columns(spec)


def test_monitored_picks_ten_eta():
    data, spec = tiny_model(np.ones((4, 8), dtype=int), np.linalg.qr(np.random.default_rng(0).normal(size=(8, 4)))[0])
    names = monitored(spec, 7)
    assert names[:3] == ["beta[1]", "sigmaK", "sigmaXi"]
    assert len(names) == 13 and names == monitored(spec, 7)


def test_chain_log_roundtrip(tmp_path):
    data, spec = _toy()
    cfg = SamplerConfig(iterations=120, burn_in=0, chains=2, seed=9)
    chains = run_chains(spec, data, cfg, log_dir=tmp_path)
    meta, cols, draws = read_chain_log(tmp_path / "chain_0.log")
    assert meta["format"] == "mlgstm-chain-log v1" and meta["seed"] == "9" and meta["chain"] == "0"
    assert meta["spec_hash"] == spec.fingerprint()
    assert cols == parameter_columns(spec)
    np.testing.assert_array_equal(draws[:, 0], chains[0].beta[:, 0])  # 17 digits round-trips
    diag = diagnose_logs([tmp_path / "chain_0.log", tmp_path / "chain_1.log"])
    assert set(diag) == set(cols)
    bad = tmp_path / "x.log"
    bad.write_text("hello\n")
    with pytest.raises(ValueError):
        read_chain_log(bad)


def test_two_cell_rhat():
    data, spec = tiny_model([[3, 8]], np.array([[1.0], [-1.0]]) / math.sqrt(2), sigma_beta=1.0,
                            sigmaXi_grid=(1 / math.sqrt(ALPHA_STAR),))
    chains = run_chains(spec, data, SamplerConfig(iterations=10_000, burn_in=1000, chains=3, seed=0))
    rh = gelman_rubin([c.beta[:, 0] for c in chains])
    print(f"two-cell beta R-hat {rh:.4f}")
    assert rh < 1.05
