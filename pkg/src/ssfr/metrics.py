"""Evaluation metrics for functional predictions."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import DegenerateDataError, InvalidArgumentError


def _pair(y, mu):
    y = np.asarray(y, dtype=np.float64)
    mu = np.asarray(mu, dtype=np.float64)
    if y.shape != mu.shape or y.ndim != 2:
        raise InvalidArgumentError(f"y {y.shape} and mu {mu.shape} must be matching n x Q arrays")
    return y, mu


def _weights(xi, q):
    xi = np.asarray(xi, dtype=np.float64)
    if xi.shape != (q,):
        raise InvalidArgumentError(f"need {q} quadrature weights, got shape {xi.shape}")
    return xi


def per_curve_r2(y, mu, xi):
    y, mu = _pair(y, mu)
    xi = _weights(xi, y.shape[1])
    energy = (y * y) @ xi
    bad = np.nonzero(energy <= 0)[0]
    if bad.size:
        raise DegenerateDataError(
            f"curves with zero energy cannot be scored: rows {bad.tolist()}", rows=bad
        )
    err = ((y - mu) ** 2) @ xi
    return (energy - err) / energy


def functional_r2(y, mu, xi, skip_degenerate=False):
    """Average over curves of ``(int y^2 - int (y - mu)^2) / int y^2``."""
    if skip_degenerate:
        y, mu = _pair(y, mu)
        keep = ((y * y) @ _weights(xi, y.shape[1])) > 0
        y, mu = y[keep], mu[keep]
    return float(np.mean(per_curve_r2(y, mu, xi)))


mse_relative_diff = functional_r2


def per_curve_rel_rmse(y, mu):
    y, mu = _pair(y, mu)
    rng = y.max(axis=1) - y.min(axis=1)
    bad = np.nonzero(rng <= 0)[0]
    if bad.size:
        raise DegenerateDataError(f"flat true curves: rows {bad.tolist()}", rows=bad)
    return np.sqrt(np.mean((y - mu) ** 2, axis=1)) / rng


def rel_rmse(y, mu):
    """Mean over curves of RMSE divided by the true curve's peak-to-peak range."""
    return float(np.mean(per_curve_rel_rmse(y, mu)))


def rmse(y, mu):
    y, mu = _pair(y, mu)
    return float(np.sqrt(np.mean((y - mu) ** 2)))


def pearson(y, mu):
    y, mu = _pair(y, mu)
    a = y.ravel() - y.mean()
    b = mu.ravel() - mu.mean()
    na, nb = np.sqrt(a @ a), np.sqrt(b @ b)
    if na == 0 or nb == 0:
        raise DegenerateDataError("correlation is undefined for a constant array")
    return float(np.clip((a @ b) / (na * nb), -1.0, 1.0))


def surface_error(w_true, w_est, s_weights, t_weights):
    """Relative L2 distance between two surfaces on the same (s x t) mesh."""
    w_true = np.asarray(w_true, dtype=np.float64)
    w_est = np.asarray(w_est, dtype=np.float64)
    if w_true.shape != w_est.shape or w_true.shape != (len(s_weights), len(t_weights)):
        raise InvalidArgumentError("surfaces and quadrature weights must share one mesh")
    wts = np.outer(s_weights, t_weights)
    denom = float(np.sum(wts * w_true * w_true))
    if not denom > 0:
        raise DegenerateDataError("true surface is identically zero")
    return float(np.sqrt(np.sum(wts * (w_est - w_true) ** 2) / denom))


EVAL_REPORT_SCHEMA_ID = "ssfr.eval-report/1"

# JSON Schema of the report written by ``ssfr evaluate`` (eval.json)
EVAL_REPORT_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "required": ["schema", "functional_r2", "rel_rmse", "rmse", "pearson", "mse_relative_diff",
                 "n", "skipped_rows"],
    "additionalProperties": False,
    "properties": {
        "schema": {"const": EVAL_REPORT_SCHEMA_ID},
        "functional_r2": {"type": "number", "maximum": 1},
        "rel_rmse": {"type": "number", "minimum": 0},
        "rmse": {"type": "number", "minimum": 0},
        "pearson": {"type": ["number", "null"], "minimum": -1, "maximum": 1},
        "mse_relative_diff": {"type": "number", "maximum": 1},
        "n": {"type": "integer", "minimum": 1},
        "skipped_rows": {"type": "array", "items": {"type": "integer", "minimum": 0}},
    },
}


@dataclass
class EvalReport:
    functional_r2: float
    rel_rmse: float
    rmse: float
    pearson: float | None  # None when either array is constant
    mse_relative_diff: float
    n: int
    per_curve_r2: list = field(default_factory=list, repr=False)
    per_curve_rel_rmse: list = field(default_factory=list, repr=False)
    skipped_rows: list = field(default_factory=list)

    def summary(self):
        d = asdict(self)
        d.pop("per_curve_r2")
        d.pop("per_curve_rel_rmse")
        return d


def evaluate(y, mu, xi, skip_degenerate=False):
    y, mu = _pair(y, mu)
    xi = _weights(xi, y.shape[1])
    skipped = []
    if skip_degenerate:
        ok = (((y * y) @ xi) > 0) & ((y.max(axis=1) - y.min(axis=1)) > 0)
        skipped = np.nonzero(~ok)[0].tolist()
        y, mu = y[ok], mu[ok]
    r2 = per_curve_r2(y, mu, xi)
    rr = per_curve_rel_rmse(y, mu)
    f = float(np.mean(r2))
    try:
        corr = pearson(y, mu)
    except DegenerateDataError:
        corr = None
    return EvalReport(
        functional_r2=f,
        rel_rmse=float(np.mean(rr)),
        rmse=rmse(y, mu),
        pearson=corr,
        mse_relative_diff=f,
        n=int(y.shape[0]),
        per_curve_r2=r2.tolist(),
        per_curve_rel_rmse=rr.tolist(),
        skipped_rows=skipped,
    )
