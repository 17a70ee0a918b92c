"""Memory and time scaling of structured fitting: array computation vs long format.

Peak memory is measured with ``tracemalloc``, which accounts every numpy buffer
allocated through Python. That makes the numbers reproducible across runs,
unlike resident-set sampling.
"""

from __future__ import annotations

import gc
import time
import tracemalloc
from dataclasses import dataclass

import numpy as np

from .errors import InvalidArgumentError
from .model import build_model
from .simgen import SimConfig, generate
from .structured import weighted_basis
from .training import TrainConfig, train

BENCH_N = (25, 50, 100)
BENCH_J = (1, 2, 4)
BENCH_R = (25, 50, 100)
PATHS = ("array", "naive")


@dataclass
class BenchRow:
    n: int
    J: int
    R: int
    Q: int
    path: str
    status: str
    peak_bytes: int
    estimated_bytes: int
    seconds: float


def _measure(fn):
    gc.collect()
    tracemalloc.start()
    tracemalloc.reset_peak()
    t0 = time.perf_counter()
    try:
        fn()
    finally:
        seconds = time.perf_counter() - t0
        _, peak = tracemalloc.get_traced_memory()
        tracemalloc.stop()
    return peak, seconds


def _basis_sizes(R, Q, num_basis):
    return min(num_basis, R), min(num_basis, Q)


def naive_design_bytes(n, J, R, Q, num_basis=20):
    """Rough peak of the naive path: one repeated predictor table plus the design
    matrix held twice (column blocks and their concatenation)."""
    k, u = _basis_sizes(R, Q, num_basis)
    cols = u * (1 + J * k)
    return 8 * n * Q * (R + 2 * cols)


def fit_naive(model, ds):
    """Least squares on the long-format design: one row per (observation, t_q).

    Every predictor curve is repeated Q times before encoding, so both the
    predictor table and the design grow with n * Q.
    """
    part = model.structured
    q = len(ds.outcome_grid)
    psi_long = np.tile(part.t_eval.T, (ds.n, 1))  # (n*Q) x U
    blocks = [psi_long]
    for term in part.terms:
        j = term.predictor_index
        x_long = np.repeat(ds.predictors[j], q, axis=0)  # (n*Q) x R
        e_long = x_long @ weighted_basis(ds.predictor_grids[j], term.s_basis)
        blocks.append(np.einsum("nu,nk->nuk", psi_long, e_long).reshape(ds.n * q, -1))
        del x_long, e_long
    design = np.concatenate(blocks, axis=1)
    del blocks
    coef, *_ = np.linalg.lstsq(design, ds.outcome.reshape(-1), rcond=None)
    return coef


def fit_array(model, ds, batch_size, epochs, seed):
    cfg = TrainConfig(batch_size=batch_size, max_epochs=epochs, patience=epochs + 1,
                      lambda_s=0.0, lambda_t=0.0, seed=seed)
    return train(model, ds, cfg)


def bench_cell(n, J, R, path, batch_size=16, epochs=2, seed=0, num_basis=20,
               memory_budget=None):
    """Run one (n, J, R, path) cell; Q equals R as in the reference grid."""
    Q = R
    ds, _ = generate(SimConfig(n=n, R=R, Q=Q, J=J, snr=1.0, seed=seed))
    k, u = _basis_sizes(R, Q, num_basis)
    model = build_model(ds, num_basis_s=k, num_basis_t=u)
    estimate = naive_design_bytes(n, J, R, Q, num_basis) if path == "naive" else 0
    if path == "naive" and memory_budget is not None and estimate > memory_budget:
        return BenchRow(n, J, R, Q, path, "over_budget", 0, estimate, 0.0)
    if path == "naive":
        peak, seconds = _measure(lambda: fit_naive(model, ds))
    elif path == "array":
        peak, seconds = _measure(lambda: fit_array(model, ds, batch_size, epochs, seed))
    else:
        raise InvalidArgumentError(f"unknown path {path!r}")
    return BenchRow(n, J, R, Q, path, "ok", int(peak), estimate, seconds)


def run_bench(ns=BENCH_N, Js=BENCH_J, Rs=BENCH_R, paths=PATHS, batch_size=16, epochs=2,
              seed=0, num_basis=20, memory_budget=None, on_row=None):
    """All cells in a fixed order, one at a time so measurements do not overlap.

    A discarded warm-up cell per path runs first: the first call in a process
    also pays for lazily created interpreter and numpy state.
    """
    for path in paths:
        bench_cell(min(ns), min(Js), min(Rs), path, batch_size, epochs, seed, num_basis)
    rows = []
    for J in Js:
        for R in Rs:
            for n in ns:
                for path in paths:
                    row = bench_cell(n, J, R, path, batch_size, epochs, seed, num_basis, memory_budget)
                    rows.append(row)
                    if on_row is not None:
                        on_row(row)
    return rows


def scaling_summary(rows):
    """Per (J, R, path): peak at the largest n divided by peak at the smallest n."""
    out = {}
    groups = {}
    for r in rows:
        if r.status == "ok":
            groups.setdefault((r.J, r.R, r.path), []).append(r)
    for key, group in groups.items():
        group.sort(key=lambda r: r.n)
        lo, hi = group[0], group[-1]
        out[key] = {
            "n_small": lo.n,
            "n_large": hi.n,
            "peak_small": lo.peak_bytes,
            "peak_large": hi.peak_bytes,
            "ratio": hi.peak_bytes / lo.peak_bytes if lo.peak_bytes else float("inf"),
        }
    return out
