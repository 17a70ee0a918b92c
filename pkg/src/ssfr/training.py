"""Discretized functional risk, Adam mini-batch training and gradient checking."""

from __future__ import annotations

import copy
import logging
import time
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .errors import InvalidArgumentError, TrainingFailure
from .model import LINKS
from .structured import structured_gradients

log = logging.getLogger(__name__)

PART_NAMES = ("structured", "deep")


def functional_risk(y, mu, xi):
    """``n^-1 sum_i sum_q xi_q (y_iq - mu_iq)^2``."""
    y = np.asarray(y, dtype=np.float64)
    mu = np.asarray(mu, dtype=np.float64)
    xi = np.asarray(xi, dtype=np.float64)
    if y.shape != mu.shape or y.ndim != 2 or xi.shape != (y.shape[1],):
        raise InvalidArgumentError(
            f"shapes do not conform: y {y.shape}, mu {mu.shape}, xi {xi.shape}"
        )
    r = y - mu
    return float(np.sum((r * r) @ xi) / y.shape[0])


@dataclass(frozen=True)
class TrainConfig:
    batch_size: int = 32
    max_epochs: int = 200
    patience: int = 20
    learning_rate: float | None = None
    lambda_s: float = 1.0
    lambda_t: float = 1.0
    validation_fraction: float = 0.2
    seed: int = 0
    loss: str = "squared_error"
    frozen: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "frozen", tuple(self.frozen))
        for name in ("batch_size", "patience"):
            if int(getattr(self, name)) != getattr(self, name) or getattr(self, name) < 1:
                raise InvalidArgumentError(f"{name} must be a positive integer")
        if int(self.max_epochs) != self.max_epochs or self.max_epochs < 0:
            raise InvalidArgumentError("max_epochs must be a nonnegative integer")
        if self.learning_rate is not None and not self.learning_rate > 0:
            raise InvalidArgumentError("learning_rate must be positive")
        if self.lambda_s < 0 or self.lambda_t < 0:
            raise InvalidArgumentError("smoothing parameters must be nonnegative")
        if not 0 <= self.validation_fraction < 1:
            raise InvalidArgumentError("validation_fraction must lie in [0, 1)")
        if self.loss != "squared_error":
            raise InvalidArgumentError("only the squared_error loss is implemented")
        bad = set(self.frozen) - set(PART_NAMES)
        if bad:
            raise InvalidArgumentError(f"unknown frozen parts {sorted(bad)}")


@dataclass
class TrainReport:
    train_risk: list = field(default_factory=list)
    val_risk: list = field(default_factory=list)
    stopped_epoch: int = 0
    best_epoch: int = 0
    best_validation_risk: float = float("nan")
    initial_train_risk: float = float("nan")
    initial_validation_risk: float = float("nan")
    learning_rate: float = 0.0
    wall_time: float = 0.0
    records: list = field(default_factory=list, repr=False)

    def to_dict(self):
        d = asdict(self)
        d.pop("records")
        return d


class Adam:
    def __init__(self, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.m = {}
        self.v = {}
        self.t = 0

    def step(self, params, grads):
        """Update ``params`` in place for every name present in ``grads``."""
        self.t += 1
        bc1 = 1.0 - self.beta1 ** self.t
        bc2 = 1.0 - self.beta2 ** self.t
        for k, g in grads.items():
            if k not in self.m:
                self.m[k] = np.zeros_like(g)
                self.v[k] = np.zeros_like(g)
            m, v = self.m[k], self.v[k]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * (g * g)
            params[k] -= (self.lr / bc1) * m / (np.sqrt(v / bc2) + self.eps)


def default_learning_rate(model, frozen=()):
    if model.deep is None or "deep" in frozen:
        return 1e-2
    return 1e-3


def loss_and_gradients(model, data, y, xi, lambda_s=0.0, lambda_t=0.0, training=False,
                       rng=None, frozen=()):
    """Mean functional risk over ``data`` plus penalty, and its gradients.

    Returns ``(objective, risk, grads)``; ``grads`` maps parameter names to arrays
    and omits frozen parts.
    """
    lam_plus, lam_minus, cache = model.parts_prepared(data, training, rng)
    eta = lam_plus + lam_minus
    link, dlink = LINKS[model.link]
    mu = link(eta)
    n = y.shape[0]
    resid = mu - y
    risk = float(np.sum((resid * resid) @ xi) / n)
    penalty = model.structured.penalty(lambda_s, lambda_t)
    upstream = (2.0 / n) * resid * xi * dlink(eta, mu)
    grads = {}
    if "structured" not in frozen:
        g0, gs = structured_gradients(
            model.structured, data.encoded, None, upstream, lambda_s, lambda_t
        )
        grads["theta_0"] = g0
        for j, g in enumerate(gs, start=1):
            grads[f"theta_{j}"] = g
    if model.deep is not None and "deep" not in frozen:
        grads.update(model.deep.backward(cache, upstream))
    return risk + penalty, risk, grads


def evaluate_risk(model, data, y, xi, rows=None, chunk=256):
    """Functional risk over ``rows`` of ``data``, evaluated in chunks (dropout off).

    Only ``chunk`` rows are materialized at a time, so memory does not grow with n.
    """
    rows = np.arange(data.n) if rows is None else rows
    link = LINKS[model.link][0]
    total = 0.0
    for start in range(0, rows.size, chunk):
        idx = rows[start:start + chunk]
        lp, lm, _ = model.parts_prepared(data.rows(idx))
        r = y[idx] - link(lp + lm)
        total += float(np.sum((r * r) @ xi))
    return total / rows.size


def _validation_rows(n, fraction, seed):
    if fraction <= 0 or n < 2:
        return np.arange(n), np.arange(0)
    perm = np.random.default_rng([seed, 2]).permutation(n)
    n_val = min(max(int(round(n * fraction)), 1), n - 1)
    return np.sort(perm[n_val:]), np.sort(perm[:n_val])


def _snapshot(params):
    return {k: v.copy() for k, v in params.items()}


def _restore(params, snap):
    for k, v in snap.items():
        params[k][...] = v


def train(model, ds, config=None, on_epoch=None, data=None):
    """Fit all unfrozen parameters jointly with Adam; returns ``(trained_model, report)``.

    The input model is left untouched. ``on_epoch`` receives one log record per
    epoch. ``data`` may carry precomputed :class:`PreparedData` for ``ds``.
    """
    config = config or TrainConfig()
    if ds.n < 2:
        raise InvalidArgumentError("training needs at least 2 observations")
    model = copy.deepcopy(model)
    t0 = time.perf_counter()
    data = model.prepare(ds) if data is None else data
    y = ds.outcome
    xi = ds.outcome_grid.quad_weights
    frozen = set(config.frozen)
    lr = config.learning_rate or default_learning_rate(model, frozen)
    report = TrainReport(learning_rate=lr)

    fit_rows, val_rows = _validation_rows(ds.n, config.validation_fraction, config.seed)
    if not val_rows.size:
        val_rows = fit_rows
    chunk = config.batch_size

    params = model.parameters()
    trainable = {
        k: v for k, v in params.items()
        if not (("structured" in frozen and k.startswith("theta_")) or
                ("deep" in frozen and k.startswith("deep.")))
    }
    opt = Adam(lr)
    shuffle_rng = np.random.default_rng([config.seed, 0])
    dropout_rng = np.random.default_rng([config.seed, 1])

    report.initial_train_risk = evaluate_risk(model, data, y, xi, fit_rows, chunk)
    best = report.initial_validation_risk = evaluate_risk(model, data, y, xi, val_rows, chunk)
    best_params = _snapshot(params)
    since_best = 0
    # overflow during divergence surfaces as a non-finite risk, handled below
    with np.errstate(over="ignore", invalid="ignore"):
        for epoch in range(1, config.max_epochs + 1):
            e0 = time.perf_counter()
            order = fit_rows[shuffle_rng.permutation(fit_rows.size)]
            for start in range(0, order.size, config.batch_size):
                idx = order[start:start + config.batch_size]
                _, _, grads = loss_and_gradients(
                    model, data.rows(idx), y[idx], xi, config.lambda_s, config.lambda_t,
                    training=True, rng=dropout_rng, frozen=frozen,
                )
                opt.step(trainable, grads)
                if model.deep is not None:
                    model.deep.mark_updated()
            tr = evaluate_risk(model, data, y, xi, fit_rows, chunk)
            va = evaluate_risk(model, data, y, xi, val_rows, chunk)
            if not (np.isfinite(tr) and np.isfinite(va)):
                _restore(params, best_params)
                raise TrainingFailure(f"non-finite risk at epoch {epoch}", last_finite_epoch=epoch - 1)
            report.train_risk.append(tr)
            report.val_risk.append(va)
            record = {"epoch": epoch, "train_risk": tr, "val_risk": va, "lr": lr,
                      "seconds": time.perf_counter() - e0}
            report.records.append(record)
            if on_epoch is not None:
                on_epoch(record)
            report.stopped_epoch = epoch
            if va < best:
                best = va
                report.best_epoch = epoch
                best_params = _snapshot(params)
                since_best = 0
            else:
                since_best += 1
                if since_best >= config.patience:
                    log.info("early stopping at epoch %d (best %d)", epoch, report.best_epoch)
                    break
    _restore(params, best_params)
    if model.deep is not None:
        model.deep.mark_updated()
    report.best_validation_risk = best
    report.wall_time = time.perf_counter() - t0
    return model, report


@dataclass
class GradCheckReport:
    max_relative_error: float
    passed: bool
    tolerance: float
    num_parameters: int
    per_parameter: dict = field(default_factory=dict)


def grad_check(model, ds, tolerance=1e-6, lambda_s=0.0, lambda_t=0.0, step=1e-5):
    """Compare analytic gradients of risk + penalty with central differences.

    The relative error of an entry is ``|a - f| / max(|a|, |f|, floor)`` where the
    floor is ``1e-8`` times the largest analytic gradient magnitude, so entries
    that are zero up to rounding do not dominate the report.
    """
    model = copy.deepcopy(model)
    data = model.prepare(ds)
    y, xi = ds.outcome, ds.outcome_grid.quad_weights

    def objective():
        return loss_and_gradients(model, data, y, xi, lambda_s, lambda_t)[0]

    _, _, grads = loss_and_gradients(model, data, y, xi, lambda_s, lambda_t)
    params = model.parameters()
    total = sum(p.size for p in params.values())
    if total == 0:
        return GradCheckReport(0.0, True, tolerance, 0)
    scale = max((float(np.max(np.abs(g))) for g in grads.values() if g.size), default=0.0)
    floor = max(1e-8 * scale, 1e-300)
    worst = 0.0
    per = {}
    for name, p in params.items():
        a = grads[name]
        flat = p.reshape(-1)
        err = 0.0
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + step
            if model.deep is not None:
                model.deep.mark_updated()
            fp = objective()
            flat[i] = orig - step
            fm = objective()
            flat[i] = orig
            fd = (fp - fm) / (2 * step)
            ai = a.reshape(-1)[i]
            err = max(err, abs(ai - fd) / max(abs(ai), abs(fd), floor))
        per[name] = err
        worst = max(worst, err)
    return GradCheckReport(worst, worst <= tolerance, tolerance, total, per)


def select_smoothing(model, ds, config=None, grid=(1e-4, 1e-3, 1e-2, 1e-1, 1.0), data=None,
                     on_epoch=None):
    """Train once per smoothing value (``lambda_s = lambda_t``) and keep the best.

    Candidates are ranked by their best unpenalized validation risk; ties go to
    the earlier grid entry. Returns ``(lam, model, report, scores)``. Epoch
    records passed to ``on_epoch`` carry the candidate under ``"lambda"``.
    """
    config = config or TrainConfig()
    if not grid:
        raise InvalidArgumentError("the smoothing grid is empty")
    data = model.prepare(ds) if data is None else data
    best = None
    scores = []
    for lam in grid:
        cfg = replace(config, lambda_s=float(lam), lambda_t=float(lam))
        hook = None
        if on_epoch is not None:
            def hook(record, lam=float(lam)):
                on_epoch({**record, "lambda": lam})
        fitted, report = train(model, ds, cfg, on_epoch=hook, data=data)
        scores.append((float(lam), report.best_validation_risk))
        if best is None or report.best_validation_risk < best[2].best_validation_risk:
            best = (float(lam), fitted, report)
    return best + (scores,)
