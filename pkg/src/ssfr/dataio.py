"""Functional datasets: wide-format CSV ingestion, standardization and splitting."""

from __future__ import annotations

import csv
import json
import math
import os
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .errors import DegenerateDataError, FormatError, InvalidArgumentError, ParseError
from .grid import Grid, grid_from_spec


@dataclass(frozen=True, eq=False)
class FunctionalDataset:
    """``n`` observations of ``J`` predictor curves and one outcome curve.

    Attributes:
        predictors: J arrays of shape (n, R_j).
        predictor_grids: J grids; grid j has R_j points.
        outcome: array of shape (n, Q).
        outcome_grid: grid with Q points.
        names: J predictor labels.
    """

    predictors: tuple
    predictor_grids: tuple
    outcome: np.ndarray
    outcome_grid: Grid
    names: tuple

    def __post_init__(self):
        preds = tuple(np.asarray(x, dtype=np.float64) for x in self.predictors)
        grids = tuple(self.predictor_grids)
        y = np.asarray(self.outcome, dtype=np.float64)
        names = tuple(self.names) if self.names else tuple(f"x{j}" for j in range(len(preds)))
        if len(preds) != len(grids) or len(names) != len(preds):
            raise InvalidArgumentError("predictors, grids and names must have equal length")
        if y.ndim != 2 or y.shape[1] != len(self.outcome_grid):
            raise InvalidArgumentError(
                f"outcome shape {y.shape} does not match outcome grid of length {len(self.outcome_grid)}"
            )
        for j, (x, g) in enumerate(zip(preds, grids)):
            if x.ndim != 2 or x.shape[0] != y.shape[0] or x.shape[1] != len(g):
                raise InvalidArgumentError(
                    f"predictor {names[j]!r} has shape {x.shape}; expected ({y.shape[0]}, {len(g)})"
                )
            if not np.all(np.isfinite(x)):
                raise InvalidArgumentError(f"predictor {names[j]!r} contains non-finite values")
        if not np.all(np.isfinite(y)):
            raise InvalidArgumentError("outcome contains non-finite values")
        object.__setattr__(self, "predictors", preds)
        object.__setattr__(self, "predictor_grids", grids)
        object.__setattr__(self, "outcome", y)
        object.__setattr__(self, "names", names)

    @property
    def n(self):
        return self.outcome.shape[0]

    @property
    def num_predictors(self):
        return len(self.predictors)

    def subset(self, rows):
        rows = np.asarray(rows, dtype=np.intp)
        return replace(
            self,
            predictors=tuple(x[rows] for x in self.predictors),
            outcome=self.outcome[rows],
        )


def read_matrix(path):
    """Read a numeric CSV, skipping a single non-numeric header row if present."""
    path = Path(path)
    rows = []
    with open(path, newline="", encoding="utf-8") as fh:
        for lineno, rec in enumerate(csv.reader(fh), start=1):
            if not rec or all(not c.strip() for c in rec):
                continue
            try:
                vals = [float(c) for c in rec]
            except ValueError:
                if not rows and lineno == 1:
                    continue  # header
                for col, c in enumerate(rec, start=1):
                    try:
                        float(c)
                    except ValueError:
                        raise ParseError(path, lineno, col, c) from None
                raise
            for col, v in enumerate(vals, start=1):
                if not math.isfinite(v):
                    raise ParseError(path, lineno, col, rec[col - 1])
            rows.append(vals)
    if not rows:
        raise FormatError(f"{path}: no data rows")
    widths = {len(r) for r in rows}
    if len(widths) != 1:
        raise FormatError(f"{path}: rows have differing column counts {sorted(widths)}")
    return np.array(rows, dtype=np.float64)


def write_matrix(path, values, header=None):
    """Write a 2-d array as CSV atomically (full float repr, so reads are lossless)."""
    values = np.asarray(values, dtype=np.float64)
    lines = []
    if header is not None:
        lines.append(",".join(header))
    for row in values:
        lines.append(",".join(repr(float(v)) for v in row))
    atomic_write_text(path, "\n".join(lines) + "\n")


def atomic_write_text(path, text):
    atomic_write_bytes(path, text.encode("utf-8"))


def atomic_write_bytes(path, data):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(f".{path.name}.tmp{os.getpid()}")
    with open(tmp, "wb") as fh:
        fh.write(data)
    os.replace(tmp, path)


def write_json(path, obj):
    atomic_write_text(path, json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _load_grid_spec(grid_spec):
    if isinstance(grid_spec, (str, os.PathLike)):
        with open(grid_spec, encoding="utf-8") as fh:
            grid_spec = json.load(fh)
    if not isinstance(grid_spec, dict):
        raise InvalidArgumentError("grid spec must be a JSON object")
    return grid_spec


def load_csv(predictor_paths, outcome_path, grid_spec, names=None):
    """Load a dataset from wide CSV files.

    ``grid_spec`` is a mapping (or a path to a JSON file holding one) with keys
    ``"predictors"`` (one grid spec per predictor file, or a single spec shared by
    all) and ``"outcome"``. Each grid spec is ``{"points": [...]}`` or
    ``{"lo": a, "hi": b, "count": m}``.
    """
    predictor_paths = [Path(p) for p in predictor_paths]
    spec = _load_grid_spec(grid_spec)
    if "outcome" not in spec or "predictors" not in spec:
        raise InvalidArgumentError("grid spec needs 'predictors' and 'outcome' entries")
    pspec = spec["predictors"]
    if isinstance(pspec, dict):
        pspec = [pspec] * len(predictor_paths)
    if len(pspec) != len(predictor_paths):
        raise InvalidArgumentError(
            f"{len(pspec)} predictor grid specs for {len(predictor_paths)} predictor files"
        )
    # identical specs share one Grid so downstream bases are recycled
    cache = {}
    grids = []
    for s in pspec:
        key = json.dumps(s, sort_keys=True)
        if key not in cache:
            cache[key] = grid_from_spec(s)
        grids.append(cache[key])
    out_key = json.dumps(spec["outcome"], sort_keys=True)
    out_grid = cache.get(out_key) or grid_from_spec(spec["outcome"])

    y = read_matrix(outcome_path)
    xs = []
    for p, g in zip(predictor_paths, grids):
        x = read_matrix(p)
        if x.shape[0] != y.shape[0]:
            raise FormatError(
                f"{p}: has {x.shape[0]} rows but outcome {outcome_path} has {y.shape[0]}"
            )
        if x.shape[1] != len(g):
            raise FormatError(f"{p}: has {x.shape[1]} columns but its grid has {len(g)} points")
        xs.append(x)
    if y.shape[1] != len(out_grid):
        raise FormatError(
            f"{outcome_path}: has {y.shape[1]} columns but the outcome grid has {len(out_grid)} points"
        )
    if names is None:
        names = spec.get("names") or [p.stem for p in predictor_paths]
    return FunctionalDataset(tuple(xs), tuple(grids), y, out_grid, tuple(names))


def load_manifest(path):
    """Load a dataset described by a manifest JSON written by :func:`save_dataset`."""
    path = Path(path)
    with open(path, encoding="utf-8") as fh:
        man = json.load(fh)
    base = path.parent
    preds = man.get("predictors")
    if not preds:
        raise InvalidArgumentError(f"{path}: manifest lists no predictors")
    spec = {
        "predictors": [p["grid"] for p in preds],
        "outcome": man["outcome"]["grid"],
        "names": [p["name"] for p in preds],
    }
    return load_csv(
        [base / p["path"] for p in preds], base / man["outcome"]["path"], spec
    )


def save_dataset(ds, out_dir, stem=""):
    """Write ``ds`` as wide CSVs plus a ``dataset.json`` manifest; returns the manifest path."""
    out_dir = Path(out_dir)
    entries = []
    for j, (x, g, name) in enumerate(zip(ds.predictors, ds.predictor_grids, ds.names)):
        fname = f"{stem}x{j}.csv"
        write_matrix(out_dir / fname, x)
        entries.append({"name": name, "path": fname, "grid": g.to_spec()})
    write_matrix(out_dir / f"{stem}y.csv", ds.outcome)
    manifest = {
        "predictors": entries,
        "outcome": {"path": f"{stem}y.csv", "grid": ds.outcome_grid.to_spec()},
    }
    mpath = out_dir / f"{stem}dataset.json"
    write_json(mpath, manifest)
    return mpath


@dataclass(frozen=True, eq=False)
class Standardizer:
    """Per-predictor mean curve and scalar scale, estimated on training rows."""

    means: tuple
    scales: tuple

    def __post_init__(self):
        for j, s in enumerate(self.scales):
            if not s > 0:
                raise DegenerateDataError(f"predictor {j} has non-positive scale {s}")

    @classmethod
    def identity(cls, ds):
        return cls(
            tuple(np.zeros(len(g)) for g in ds.predictor_grids),
            tuple(1.0 for _ in ds.predictor_grids),
        )

    def to_dict(self):
        return {"means": [m.tolist() for m in self.means], "scales": list(self.scales)}

    @classmethod
    def from_dict(cls, d):
        return cls(tuple(np.asarray(m, dtype=np.float64) for m in d["means"]),
                   tuple(float(s) for s in d["scales"]))


def fit_standardizer(ds, train_rows=None):
    """Pointwise mean curve and pooled standard deviation per predictor."""
    rows = np.arange(ds.n) if train_rows is None else np.asarray(train_rows, dtype=np.intp)
    if rows.size == 0:
        raise InvalidArgumentError("train_rows must be nonempty")
    means, scales = [], []
    for name, x in zip(ds.names, ds.predictors):
        xt = x[rows]
        mu = xt.mean(axis=0)
        sd = float(np.sqrt(np.mean((xt - mu) ** 2)))
        if not sd > 0:
            raise DegenerateDataError(f"predictor {name!r} is constant on the training rows")
        means.append(mu)
        scales.append(sd)
    return Standardizer(tuple(means), tuple(scales))


def _check_standardizer(std, ds):
    if len(std.means) != ds.num_predictors:
        raise InvalidArgumentError(
            f"standardizer has {len(std.means)} predictors, dataset has {ds.num_predictors}"
        )
    for m, g in zip(std.means, ds.predictor_grids):
        if m.shape != (len(g),):
            raise InvalidArgumentError("standardizer mean curve does not match grid length")


def apply_standardizer(std, ds):
    _check_standardizer(std, ds)
    xs = tuple((x - m) / s for x, m, s in zip(ds.predictors, std.means, std.scales))
    return replace(ds, predictors=xs)


def invert_standardizer(std, ds):
    _check_standardizer(std, ds)
    xs = tuple(x * s + m for x, m, s in zip(ds.predictors, std.means, std.scales))
    return replace(ds, predictors=xs)


def split_rows(n, test_fraction, seed):
    """Seeded shuffle of ``range(n)`` split into (train, test) index arrays."""
    if not 0 < test_fraction < 1:
        raise InvalidArgumentError(f"test_fraction must lie in (0, 1), got {test_fraction}")
    perm = np.random.default_rng(seed).permutation(n)
    n_test = int(round(n * test_fraction))
    n_test = min(max(n_test, 1), n - 1) if n >= 2 else n_test
    return np.sort(perm[n_test:]), np.sort(perm[:n_test])


def split(ds, test_fraction, seed):
    train, test = split_rows(ds.n, test_fraction, seed)
    return ds.subset(train), ds.subset(test)
