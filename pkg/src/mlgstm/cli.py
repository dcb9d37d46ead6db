"""Command line entry point: ``mlgstm {fit,simulate,diagnose,truth}``.

Exit codes: 0 success, 2 input or configuration error, 3 numerical failure.
"""
from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from .gibbs_engine import NumericalFailure, diagnose_logs, run_chains, summarize
from .io import (
    ParseError,
    load_config,
    load_counts,
    load_covariates,
    manifest,
    write_cells,
    write_counts,
    write_outputs,
)
from .mi_structures import AdjacencyStructure
from .pmstm import build_model_spec
from .simulation import simulate_pseudo_data, synthetic_truth

EXIT_OK, EXIT_PARSE, EXIT_NUMERIC = 0, 2, 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_PARSE)


def _fit(args) -> int:
    cfg = load_config(args.config)
    adjacency = AdjacencyStructure.read(args.adjacency)
    data = load_counts(args.data, cfg.prediction_cells, n_regions=adjacency.n_regions)
    cov = None
    if cfg.covariates:
        cov = load_covariates(cfg.covariates, cfg.covariate_columns, data)
    spec = build_model_spec(
        data, adjacency, covariates=cov, r=cfg.rank, k_flag=cfg.k_flag, precision=cfg.precision,
        cross_variable_links=cfg.cross_variable_links, variable_effects=cfg.variable_effects,
        sigma_beta=cfg.sigma_beta, sigmaK_grid=cfg.sigmaK_grid, sigmaXi_grid=cfg.sigmaXi_grid,
        alpha_G=cfg.alpha_G)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    chains = run_chains(spec, data, cfg.sampler(), log_dir=out)
    summary = summarize(chains, data, spec)
    inputs = {"data": args.data, "adjacency": args.adjacency, "config": args.config}
    if cfg.prediction_cells:
        inputs["prediction_cells"] = cfg.prediction_cells
    write_outputs(summary, out, manifest(cfg, spec.fingerprint(), inputs))
    print(f"wrote {out}/predictions.csv ({data.N} cells, {summary.n_draws} draws, DIC {summary.dic:.6g})")
    return EXIT_OK


def _simulate(args) -> int:
    truth = load_counts(args.truth)
    if not 0 <= args.mask < 1:
        raise ParseError("--mask must lie in [0, 1)")
    rng = np.random.default_rng(np.random.SeedSequence(args.seed))
    data = simulate_pseudo_data(truth, rng, observed_fraction=1.0 - args.mask,
                                per_group=not args.global_mask)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_counts(data, out / "counts.csv")
    write_cells(data.pred_cells(), out / "prediction_cells.csv")
    print(f"wrote {out}/counts.csv ({data.n} observed of {data.N} cells)")
    return EXIT_OK


def _diagnose(args) -> int:
    paths = sorted(Path(args.chains).glob("chain_*.log"))
    if not paths:
        raise ParseError(f"{args.chains}: no chain_*.log files")
    table = diagnose_logs(paths, args.batch_size)
    print("quantity,rhat,mcse")
    for name, (rh, se) in table.items():
        print(f"{name},{rh:.6g},{se:.6g}")
    return EXIT_OK


def _truth(args) -> int:
    rows, cols = (int(x) for x in args.grid.lower().split("x"))
    data, adj = synthetic_truth(rows, cols, args.times, args.variables,
                                np.random.default_rng(np.random.SeedSequence(args.seed)))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_counts(data, out / "truth.csv")
    adj.write(out / "adjacency.txt")
    print(f"wrote {out}/truth.csv and {out}/adjacency.txt")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="mlgstm", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    f = sub.add_parser("fit", help="run the Gibbs sampler and write predictions")
    f.add_argument("--data", required=True)
    f.add_argument("--adjacency", required=True)
    f.add_argument("--config", required=True)
    f.add_argument("--out", required=True)
    f.set_defaults(func=_fit)

    s = sub.add_parser("simulate", help="draw Poisson(Z + 1) pseudo-data and mask cells")
    s.add_argument("--truth", required=True)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--mask", type=float, default=0.35, help="fraction of cells left unobserved")
    s.add_argument("--global-mask", action="store_true", help="mask over all cells, not per (variable, time)")
    s.add_argument("--out", required=True)
    s.set_defaults(func=_simulate)

    d = sub.add_parser("diagnose", help="R-hat and batch-means MCSE from chain logs")
    d.add_argument("--chains", required=True)
    d.add_argument("--batch-size", type=int, default=50)
    d.set_defaults(func=_diagnose)

    t = sub.add_parser("truth", help="write a synthetic lattice truth and its adjacency")
    t.add_argument("--grid", default="5x10")
    t.add_argument("--times", type=int, default=4)
    t.add_argument("--variables", type=int, default=2)
    t.add_argument("--seed", type=int, default=0)
    t.add_argument("--out", required=True)
    t.set_defaults(func=_truth)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ParseError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except (NumericalFailure, np.linalg.LinAlgError, FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PARSE


if __name__ == "__main__":
    sys.exit(main())
