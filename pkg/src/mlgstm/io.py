"""Reading and writing counts, configuration files and fit outputs."""
from __future__ import annotations

import csv
import hashlib
import json
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np

from . import __version__
from .gibbs_engine import PosteriorSummary, SamplerConfig
from .pmstm import CountDataset, default_grid

COUNT_HEADER = ["variable", "region", "time", "count"]
CELL_HEADER = ["variable", "region", "time"]
PREDICTION_HEADER = "variable,region,time,mean,sd,q2.5,q97.5"
PARAMETER_HEADER = "parameter,mean,sd,q2.5,q97.5"
DIAGNOSTIC_HEADER = "quantity,rhat,mcse"


class ParseError(ValueError):
    pass


def _fmt(x: float) -> str:
    return f"{float(x):.17g}"


def _int_field(tok: str, what: str, where: str) -> int:
    try:
        return int(tok)
    except ValueError:
        raise ParseError(f"{where}: {what} is not an integer: {tok!r}") from None


def _read_rows(path, header):
    path = Path(path)
    try:
        fh = path.open(newline="")
    except OSError as exc:
        raise ParseError(f"{path}: {exc.strerror}") from None
    with fh:
        reader = csv.reader(fh)
        first = next(reader, None)
        if first is None or [h.strip() for h in first] != header:
            raise ParseError(f"{path}:1: expected header {','.join(header)}")
        rows = []
        for lineno, row in enumerate(reader, 2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise ParseError(f"{path}:{lineno}: expected {len(header)} fields, got {len(row)}")
            rows.append((lineno, [c.strip() for c in row]))
    return rows


def load_cells(path) -> np.ndarray:
    """Prediction-cell list with header variable,region,time."""
    out = []
    for lineno, row in _read_rows(path, CELL_HEADER):
        where = f"{path}:{lineno}"
        out.append([_int_field(row[0], "variable", where), _int_field(row[1], "region", where),
                    _int_field(row[2], "time", where)])
    if not out:
        raise ParseError(f"{path}: no prediction cells")
    return np.array(out, dtype=np.int64)


def load_counts(path, prediction_cells=None, n_regions: int | None = None) -> CountDataset:
    """Counts with header variable,region,time,count; prediction cells optional."""
    rows = _read_rows(path, COUNT_HEADER)
    if not rows:
        raise ParseError(f"{path}: no observations")
    vals = np.empty((len(rows), 4), dtype=np.int64)
    seen = {}
    for i, (lineno, row) in enumerate(rows):
        where = f"{path}:{lineno}"
        v = _int_field(row[0], "variable", where)
        a = _int_field(row[1], "region", where)
        t = _int_field(row[2], "time", where)
        z = _int_field(row[3], "count", where)
        if v < 1 or t < 1 or a < 0:
            raise ParseError(f"{where}: variable and time start at 1, region at 0")
        if z < 0:
            raise ParseError(f"{where}: negative count {z}")
        key = (v, a, t)
        if key in seen:
            raise ParseError(f"{where}: duplicate cell (variable={v}, region={a}, time={t}), "
                             f"first seen on line {seen[key]}")
        seen[key] = lineno
        vals[i] = (v, a, t, z)
    kw = {}
    if prediction_cells is not None:
        cells = load_cells(prediction_cells) if not isinstance(prediction_cells, np.ndarray) else prediction_cells
        kw = dict(pred_variable=cells[:, 0], pred_region=cells[:, 1], pred_time=cells[:, 2])
    try:
        return CountDataset(vals[:, 0], vals[:, 1], vals[:, 2], vals[:, 3], n_regions=n_regions, **kw)
    except ValueError as exc:
        raise ParseError(f"{path}: {exc}") from None


def write_counts(data: CountDataset, path) -> None:
    with Path(path).open("w", newline="") as fh:
        fh.write(",".join(COUNT_HEADER) + "\n")
        for v, a, t, z in zip(data.variable, data.region, data.time, data.count):
            fh.write(f"{v},{a},{t},{z}\n")


def write_cells(cells: np.ndarray, path) -> None:
    with Path(path).open("w", newline="") as fh:
        fh.write(",".join(CELL_HEADER) + "\n")
        for v, a, t in cells:
            fh.write(f"{v},{a},{t}\n")


def load_covariates(path, columns, data: CountDataset) -> np.ndarray:
    """Covariate columns keyed by (variable, region, time), aligned to the prediction cells."""
    path = Path(path)
    with path.open(newline="") as fh:
        reader = csv.DictReader(fh)
        need = set(CELL_HEADER) | set(columns)
        if reader.fieldnames is None or not need <= set(reader.fieldnames):
            raise ParseError(f"{path}:1: header must contain {sorted(need)}")
        table = {}
        for lineno, row in enumerate(reader, 2):
            where = f"{path}:{lineno}"
            key = (_int_field(row["variable"], "variable", where), _int_field(row["region"], "region", where),
                   _int_field(row["time"], "time", where))
            try:
                table[key] = [float(row[c]) for c in columns]
            except ValueError:
                raise ParseError(f"{where}: non-numeric covariate") from None
    out = np.empty((data.N, len(columns)))
    for i, key in enumerate(map(tuple, data.pred_cells().tolist())):
        if key not in table:
            raise ParseError(f"{path}: no covariates for cell {key}")
        out[i] = table[key]
    return out


def parse_grid(text: str) -> np.ndarray:
    """``start:stop:step`` (inclusive) or a comma separated list."""
    text = text.strip()
    if ":" in text:
        a, b, c = (float(x) for x in text.split(":"))
        n = int(round((b - a) / c)) + 1
        return np.round(a + c * np.arange(n), 12)
    return np.array([float(x) for x in text.split(",") if x.strip()])


@dataclass
class RunConfig:
    """Every key accepted in a fit configuration file (flat ``key = value``)."""

    iterations: int = 10000
    burn_in: int = 2000
    thin: int = 1
    chains: int = 3
    seed: int = 0
    k_flag: str = "sMLG"
    block_sampler: str = "exact"
    n_jobs: int = 1
    sigma_beta: float = 10.0
    alpha_G: float = 1000.0
    sigmaK_grid: np.ndarray = field(default_factory=default_grid)
    sigmaXi_grid: np.ndarray = field(default_factory=default_grid)
    rank: int | None = None
    precision: str = "identity_minus_adjacency"
    cross_variable_links: bool = True
    variable_effects: bool = True
    prediction_cells: str | None = None
    covariates: str | None = None
    covariate_columns: tuple[str, ...] = ()

    def sampler(self) -> SamplerConfig:
        return SamplerConfig(self.iterations, self.burn_in, self.thin, self.chains, self.seed,
                             self.k_flag, self.block_sampler, self.n_jobs)

    def canonical(self) -> str:
        items = []
        for f in fields(self):
            v = getattr(self, f.name)
            if isinstance(v, np.ndarray):
                v = ",".join(_fmt(x) for x in v)
            items.append(f"{f.name}={v}")
        return "\n".join(items)

    def digest(self) -> str:
        return hashlib.sha256(self.canonical().encode()).hexdigest()[:16]


def _to_bool(s: str) -> bool:
    low = s.lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


def load_config(path) -> RunConfig:
    path = Path(path)
    cfg = RunConfig()
    types = {f.name: f for f in fields(RunConfig)}
    try:
        text = path.read_text()
    except OSError as exc:
        raise ParseError(f"{path}: {exc.strerror}") from None
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ParseError(f"{path}:{lineno}: expected key = value")
        key, val = (x.strip() for x in line.split("=", 1))
        if key not in types:
            raise ParseError(f"{path}:{lineno}: unknown key {key!r}")
        try:
            if key in ("sigmaK_grid", "sigmaXi_grid"):
                parsed = parse_grid(val)
            elif key in ("iterations", "burn_in", "thin", "chains", "seed", "n_jobs"):
                parsed = int(val)
            elif key == "rank":
                parsed = None if val.lower() in ("", "auto", "none") else int(val)
            elif key in ("sigma_beta", "alpha_G"):
                parsed = float(val)
            elif key in ("cross_variable_links", "variable_effects"):
                parsed = _to_bool(val)
            elif key == "covariate_columns":
                parsed = tuple(c.strip() for c in val.split(",") if c.strip())
            else:
                parsed = val
        except ValueError as exc:
            raise ParseError(f"{path}:{lineno}: bad value for {key}: {exc}") from None
        setattr(cfg, key, parsed)
    for key in ("prediction_cells", "covariates"):
        val = getattr(cfg, key)
        if val is not None and not Path(val).is_absolute():
            setattr(cfg, key, str((path.parent / val).resolve()))
    try:
        cfg.sampler()
    except ValueError as exc:
        raise ParseError(f"{path}: {exc}") from None
    return cfg


def write_outputs(summary: PosteriorSummary, out_dir, manifest: dict | None = None) -> list[Path]:
    """predictions.csv, parameters.csv, diagnostics.csv and optionally manifest.json."""
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
        written = []
        p = out / "predictions.csv"
        with p.open("w", newline="") as fh:
            fh.write(PREDICTION_HEADER + "\n")
            for i, (v, a, t) in enumerate(summary.cells):
                fh.write(f"{v},{a},{t},{_fmt(summary.pred_mean[i])},{_fmt(summary.pred_sd[i])},"
                         f"{_fmt(summary.pred_q025[i])},{_fmt(summary.pred_q975[i])}\n")
        written.append(p)
        p = out / "parameters.csv"
        with p.open("w", newline="") as fh:
            fh.write(PARAMETER_HEADER + "\n")
            for i, name in enumerate(summary.param_names):
                fh.write(f"{name},{_fmt(summary.param_mean[i])},{_fmt(summary.param_sd[i])},"
                         f"{_fmt(summary.param_q025[i])},{_fmt(summary.param_q975[i])}\n")
        written.append(p)
        p = out / "diagnostics.csv"
        with p.open("w", newline="") as fh:
            fh.write(DIAGNOSTIC_HEADER + "\n")
            for name in summary.rhat:
                fh.write(f"{name},{_fmt(summary.rhat[name])},{_fmt(summary.mcse[name])}\n")
            fh.write(f"DIC,{_fmt(summary.dic)},\n")
        written.append(p)
        if manifest is not None:
            p = out / "manifest.json"
            p.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
            written.append(p)
    except OSError as exc:
        raise OSError(f"{out}: could not write outputs ({exc.strerror})") from exc
    return written


def read_predictions(path) -> dict[str, np.ndarray]:
    """Parse predictions.csv back into arrays (cells as ints, statistics as floats)."""
    path = Path(path)
    with path.open(newline="") as fh:
        lines = fh.read().splitlines()
    if not lines or lines[0] != PREDICTION_HEADER:
        raise ParseError(f"{path}:1: expected header {PREDICTION_HEADER}")
    rows = [ln.split(",") for ln in lines[1:] if ln]
    arr = np.array(rows, dtype=object)
    return {
        "cells": arr[:, :3].astype(np.int64),
        "mean": arr[:, 3].astype(float),
        "sd": arr[:, 4].astype(float),
        "q2.5": arr[:, 5].astype(float),
        "q97.5": arr[:, 6].astype(float),
    }


def manifest(cfg: RunConfig, spec_hash: str, inputs: dict[str, str]) -> dict:
    h = {}
    for name, p in sorted(inputs.items()):
        h[name] = hashlib.sha256(Path(p).read_bytes()).hexdigest()[:16]
    return {"config_hash": cfg.digest(), "seed": int(cfg.seed), "code_version": __version__,
            "spec_hash": spec_hash, "input_hashes": h}
