import json
import math

import numpy as np
import pytest
from scipy import stats

from mlgstm import cli
from mlgstm.gibbs_engine import NumericalFailure, SamplerConfig, run_chains, summarize
from mlgstm.io import (
    ParseError,
    load_cells,
    load_config,
    load_counts,
    load_covariates,
    parse_grid,
    read_predictions,
    write_counts,
    write_outputs,
)
from mlgstm.mi_structures import AdjacencyStructure
from mlgstm.pmstm import CountDataset, build_model_spec
from mlgstm.simulation import (
    average_absolute_error,
    sign_test,
    simulate_pseudo_data,
    synthetic_truth,
)

HEADER = "variable,region,time,count\n"


def _write(tmp_path, name, text):
    p = tmp_path / name
    p.write_text(text)
    return p


# --- counts parser --------------------------------------------------------

def test_empty_body(tmp_path):
    with pytest.raises(ParseError, match="no observations"):
        load_counts(_write(tmp_path, "c.csv", HEADER))


def test_three_row_fixture(tmp_path):
    d = load_counts(_write(tmp_path, "c.csv", HEADER + "1,2,1,5\n1,0,1,3\n2,1,2,0\n"))
    assert d.n == 3 and d.L == 2 and d.T == 2
    sets = {k: sorted(np.asarray(v).tolist()) for k, v in d.observed_sets().items()}
    assert sets == {(1, 1): [0, 2], (2, 2): [1]}
    assert d.counts_at(1).tolist() == [3, 5]


def test_duplicate_names_key(tmp_path):
    with pytest.raises(ParseError, match=r"c.csv:3: duplicate cell \(variable=1, region=2, time=1\)"):
        load_counts(_write(tmp_path, "c.csv", HEADER + "1,2,1,5\n1,2,1,4\n"))


@pytest.mark.parametrize("body,msg", [
    ("1,2,1\n", "expected 4 fields"),
    ("1,2,1,5,7\n", "expected 4 fields"),
    ("1,x,1,5\n", "region is not an integer"),
    ("1,2,1,2.5\n", "count is not an integer"),
    ("0,2,1,5\n", "start at 1"),
    ("1,-1,1,5\n", "start at 1"),
    ("1,2,0,5\n", "start at 1"),
    ("1,2,1,-3\n", "negative count"),
])
def test_malformed_rows_report_line(tmp_path, body, msg):
    with pytest.raises(ParseError, match=r"c.csv:3: .*" + msg):
        load_counts(_write(tmp_path, "c.csv", HEADER + "1,0,1,1\n" + body))


def test_bad_header_and_missing_file(tmp_path):
    with pytest.raises(ParseError, match=":1: expected header"):
        load_counts(_write(tmp_path, "c.csv", "var,region,time,count\n1,0,1,1\n"))
    with pytest.raises(ParseError):
        load_counts(tmp_path / "nope.csv")


def test_fuzz_corpus_of_valid_rows(tmp_path):
    rng = np.random.default_rng(0)
    n = 10_000
    keys = rng.choice(4 * 500 * 10, size=n, replace=False)
    v, rest = np.divmod(keys, 5000)
    a, t = np.divmod(rest, 10)
    z = rng.integers(0, 10 ** rng.integers(1, 9, size=n))
    lines = [f"{v[i] + 1}{' ' * rng.integers(0, 2)},{a[i]},{t[i] + 1},{z[i]}" for i in range(n)]
    d = load_counts(_write(tmp_path, "c.csv", HEADER + "\n".join(lines) + "\n"))
    assert d.n == n and int(d.count.sum()) == int(z.sum())


def test_prediction_cells_and_roundtrip(tmp_path):
    cells = _write(tmp_path, "cells.csv", "variable,region,time\n1,0,1\n1,1,1\n1,2,1\n")
    d = load_counts(_write(tmp_path, "c.csv", HEADER + "1,1,1,4\n"), cells)
    assert d.N == 3 and d.n == 1 and d.obs_rows(1).tolist() == [1]
    write_counts(d, tmp_path / "back.csv")
    d2 = load_counts(tmp_path / "back.csv", load_cells(cells))
    assert np.array_equal(d2.count, d.count) and d2.N == 3
    with pytest.raises(ParseError, match="prediction cell"):
        load_counts(_write(tmp_path, "c2.csv", HEADER + "1,5,1,4\n"), cells)


def test_covariates(tmp_path):
    d = load_counts(_write(tmp_path, "c.csv", HEADER + "1,0,1,4\n1,1,1,2\n"))
    p = _write(tmp_path, "cov.csv", "variable,region,time,pop,area\n1,1,1,3.5,1\n1,0,1,2.0,2\n")
    X = load_covariates(p, ("pop",), d)
    np.testing.assert_array_equal(X, [[2.0], [3.5]])
    with pytest.raises(ParseError):
        load_covariates(p, ("income",), d)


# --- config ---------------------------------------------------------------

def test_config_parsing(tmp_path):
    p = _write(tmp_path, "run.cfg", "# comment\niterations = 50\nburn_in=10  # inline\n"
               "sigmaK_grid = 0.1:0.5:0.1\nk_flag = nMLG\nrank = auto\nprediction_cells = cells.csv\n")
    cfg = load_config(p)
    assert cfg.iterations == 50 and cfg.burn_in == 10 and cfg.k_flag == "nMLG" and cfg.rank is None
    np.testing.assert_allclose(cfg.sigmaK_grid, [0.1, 0.2, 0.3, 0.4, 0.5])
    assert cfg.prediction_cells == str(tmp_path / "cells.csv")
    assert cfg.digest() == load_config(p).digest()
    with pytest.raises(ParseError, match="run2.cfg:1: unknown key"):
        load_config(_write(tmp_path, "run2.cfg", "iters = 5\n"))
    with pytest.raises(ParseError, match="run3.cfg:1: bad value"):
        load_config(_write(tmp_path, "run3.cfg", "iterations = many\n"))
    with pytest.raises(ParseError):
        load_config(_write(tmp_path, "run4.cfg", "iterations = 5\nburn_in = 5\n"))
    np.testing.assert_allclose(parse_grid("0.5, 1, 2"), [0.5, 1, 2])


# --- pseudo data and comparison statistics --------------------------------

def test_pseudo_data_plus_one_mean():
    truth = CountDataset(np.ones(100_000, int), np.arange(100_000), np.ones(100_000, int),
                         np.zeros(100_000, int))
    d = simulate_pseudo_data(truth, np.random.default_rng(0), observed_fraction=1.0)
    assert abs(d.count.mean() - 1.0) < 0.02
    assert d.n == d.N


def test_pseudo_data_masking_and_seed():
    truth, _ = synthetic_truth(3, 4, T=2, L=2)
    a = simulate_pseudo_data(truth, np.random.default_rng(5))
    b = simulate_pseudo_data(truth, np.random.default_rng(5))
    assert np.array_equal(a.count, b.count) and np.array_equal(a.region, b.region)
    for key, idx in a.observed_sets().items():
        assert len(idx) == round(0.65 * 12)
    g = simulate_pseudo_data(truth, np.random.default_rng(5), per_group=False)
    assert g.n == round(0.65 * truth.n)


def test_average_absolute_error_examples():
    truth = CountDataset([1, 1, 1], [0, 1, 2], [1, 1, 1], [4, 0, 7])
    assert average_absolute_error(truth, [4, 0, 7]) == 0.0
    assert average_absolute_error(truth, [6.5, 2.5, 9.5]) == pytest.approx(2.5, abs=1e-12)
    assert average_absolute_error(truth, [5.0, 0.5, 3.0]) == pytest.approx((1 + 0.5 + 4) / 3, abs=1e-12)
    assert average_absolute_error(truth, [5.0, 1.0, 8.0], offset=1.0) == 0.0
    with pytest.raises(ValueError):
        average_absolute_error(truth, [1.0, 2.0])


def test_sign_test_examples():
    a = np.arange(10) + 1.0
    assert sign_test(a, a - 0.5) == pytest.approx(2 * 0.5 ** 10, rel=1e-12)
    with pytest.raises(ValueError):
        sign_test(a, a)
    x = np.array([1.0, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12])
    y = np.array([2.0, 1, 1, 1, 1, 1, 1, 1, 9, 10, 11, 13])
    # differences: - + + + + + + + 0 0 0 -  -> n = 9, k = 7 positives
    ref = sum(math.comb(9, j) for j in range(0, 3)) / 2 ** 9 * 2
    assert sign_test(x, y) == pytest.approx(ref, rel=1e-12)
    assert sign_test(x, y) == pytest.approx(stats.binomtest(7, 9).pvalue, rel=1e-12)


# --- outputs and CLI ------------------------------------------------------

def _small_fit(seed=0):
    truth, adj = synthetic_truth(3, 4, T=2, L=1, rng=np.random.default_rng(1))
    data = simulate_pseudo_data(truth, np.random.default_rng(2))
    spec = build_model_spec(data, adj, r=2)
    chains = run_chains(spec, data, SamplerConfig(iterations=120, burn_in=20, chains=2, seed=seed))
    return truth, data, spec, summarize(chains, data, spec)


def test_write_outputs_headers_and_roundtrip(tmp_path):
    _, data, _, s = _small_fit()
    write_outputs(s, tmp_path, {"seed": 0})
    raw = (tmp_path / "predictions.csv").read_bytes()
    assert raw.startswith(b"variable,region,time,mean,sd,q2.5,q97.5\n")
    assert (tmp_path / "parameters.csv").read_bytes().startswith(b"parameter,mean,sd,q2.5,q97.5\n")
    assert (tmp_path / "diagnostics.csv").read_bytes().startswith(b"quantity,rhat,mcse\n")
    assert json.loads((tmp_path / "manifest.json").read_text()) == {"seed": 0}
    back = read_predictions(tmp_path / "predictions.csv")
    assert np.array_equal(back["cells"], s.cells)
    assert np.array_equal(back["mean"], s.pred_mean)
    assert np.array_equal(back["q97.5"], s.pred_q975)
    assert np.all(back["q2.5"] <= back["mean"]) and np.all(back["mean"] <= back["q97.5"])


def test_pipeline_pure_given_seed():
    truth, _, _, a = _small_fit(4)
    _, _, _, b = _small_fit(4)
    assert average_absolute_error(truth, a, offset=1) == average_absolute_error(truth, b, offset=1)


def _cli_inputs(tmp_path):
    assert cli.main(["truth", "--grid", "3x4", "--times", "2", "--variables", "1", "--out", str(tmp_path)]) == 0
    assert cli.main(["simulate", "--truth", str(tmp_path / "truth.csv"), "--seed", "3",
                     "--out", str(tmp_path)]) == 0
    cfg = tmp_path / "run.cfg"
    cfg.write_text("iterations = 60\nburn_in = 20\nchains = 2\nseed = 11\nrank = 2\n"
                   "prediction_cells = prediction_cells.csv\n")
    return ["fit", "--data", str(tmp_path / "counts.csv"), "--adjacency", str(tmp_path / "adjacency.txt"),
            "--config", str(cfg)]


def test_cli_round_trip_and_exit_codes(tmp_path, capsys):
    args = _cli_inputs(tmp_path)
    assert cli.main(args + ["--out", str(tmp_path / "o1")]) == 0
    assert (tmp_path / "o1" / "chain_1.log").exists()
    assert cli.main(["diagnose", "--chains", str(tmp_path / "o1")]) == 0
    assert "beta[1]" in capsys.readouterr().out
    assert cli.main(["fit", "--data", str(tmp_path / "missing.csv"), "--adjacency",
                     str(tmp_path / "adjacency.txt"), "--config", str(tmp_path / "run.cfg"),
                     "--out", str(tmp_path / "o2")]) == 2
    (tmp_path / "bad.csv").write_text("variable,region,time,count\n1,0,1,-1\n")
    assert cli.main(["fit", "--data", str(tmp_path / "bad.csv"), "--adjacency",
                     str(tmp_path / "adjacency.txt"), "--config", str(tmp_path / "run.cfg"),
                     "--out", str(tmp_path / "o3")]) == 2
    assert cli.main(["diagnose", "--chains", str(tmp_path / "nothing")]) == 2
    with pytest.raises(SystemExit) as exc:
        cli.main(["fit"])
    assert exc.value.code == 2


def test_cli_numerical_failure_exit_code(tmp_path, monkeypatch):
    args = _cli_inputs(tmp_path)

    def boom(*a, **k):
        raise NumericalFailure("linear predictor overflow")

    monkeypatch.setattr(cli, "run_chains", boom)
    assert cli.main(args + ["--out", str(tmp_path / "o")]) == 3
