"""
Command line round trip
=======================

Runs the four subcommands in a temporary directory: ``truth`` writes a
synthetic lattice, ``simulate`` masks it into pseudo-data, ``fit`` runs the
sampler and ``diagnose`` reads the chain logs back.

Run with ``python3 demos/03_command_line.py``.
"""
from __future__ import annotations

import tempfile
from pathlib import Path

from mlgstm.cli import main

with tempfile.TemporaryDirectory() as tmp:
    tmp = Path(tmp)
    main(["truth", "--grid", "4x6", "--times", "3", "--variables", "1", "--seed", "5", "--out", str(tmp)])
    main(["simulate", "--truth", str(tmp / "truth.csv"), "--seed", "6", "--mask", "0.35", "--out", str(tmp)])

    # every fit option lives in a flat key = value file
    (tmp / "run.cfg").write_text(
        "iterations = 600\n"
        "burn_in = 200\n"
        "chains = 2\n"
        "seed = 7\n"
        "k_flag = sMLG\n"
        "sigmaK_grid = 0.01:2:0.01\n"
        "prediction_cells = prediction_cells.csv\n"
    )
    rc = main(["fit", "--data", str(tmp / "counts.csv"), "--adjacency", str(tmp / "adjacency.txt"),
               "--config", str(tmp / "run.cfg"), "--out", str(tmp / "fit")])
    print(f"fit exit code {rc}; outputs: {sorted(p.name for p in (tmp / 'fit').iterdir())}")
    print((tmp / "fit" / "predictions.csv").read_text().splitlines()[:3])

    main(["diagnose", "--chains", str(tmp / "fit")])

    # malformed input exits with code 2
    (tmp / "bad.csv").write_text("variable,region,time,count\n1,0,1,-4\n")
    rc = main(["fit", "--data", str(tmp / "bad.csv"), "--adjacency", str(tmp / "adjacency.txt"),
               "--config", str(tmp / "run.cfg"), "--out", str(tmp / "bad")])
    print(f"negative count exit code {rc}")
