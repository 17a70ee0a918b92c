"""Synthetic function-on-function data with known weight surfaces.

All randomness comes from numpy's PCG64 generator seeded with ``SimConfig.seed``,
so a given configuration reproduces bit-identical data.

Default truth (``surface="bumps"``) is a mixture of three isotropic Gaussian
bumps given in unit coordinates and mapped onto the s/t domains::

    (s_c, t_c, a_c, sigma_c) = (0.3, 0.3,  1.0, 0.12)
                               (0.7, 0.3, -1.0, 0.12)
                               (0.5, 0.75, 0.5, 0.08)

The first two bumps cancel in the s-average of the surface, which keeps the
truth well inside the span the trigonometric predictor curves can resolve. For
J > 1, odd-numbered predictors use the surface mirrored in s.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .dataio import FunctionalDataset
from .errors import DegenerateDataError, InvalidArgumentError
from .grid import bspline_basis, make_uniform_grid
from .structured import surface

BUMPS = ((0.3, 0.3, 1.0, 0.12), (0.7, 0.3, -1.0, 0.12), (0.5, 0.75, 0.5, 0.08))
SURFACES = ("bumps", "planted_theta", "custom")
NUM_HARMONICS = 10


@dataclass(frozen=True)
class SimConfig:
    n: int = 1280
    R: int = 100
    Q: int = 100
    J: int = 1
    snr: float = 1.0
    seed: int = 0
    surface: str = "bumps"
    nonlinear_amplitude: float = 0.0
    s_domain: tuple = (0.0, 1.0)
    t_domain: tuple = (0.0, 1.0)
    # planted_theta: one U x K matrix per predictor; custom: one R x Q mesh per predictor
    planted_theta: tuple | None = field(default=None, repr=False)
    custom_mesh: tuple | None = field(default=None, repr=False)
    degree: int = 3
    # add a random constant to each predictor curve (see sample_predictors)
    predictor_level: bool = True

    def __post_init__(self):
        for name in ("n", "R", "Q", "J"):
            v = getattr(self, name)
            if int(v) != v or v < 1:
                raise InvalidArgumentError(f"{name} must be a positive integer, got {v!r}")
        if self.R < 2 or self.Q < 2:
            raise InvalidArgumentError("R and Q must be at least 2")
        if not self.snr > 0:
            raise InvalidArgumentError(f"snr must be positive, got {self.snr!r}")
        if self.nonlinear_amplitude < 0:
            raise InvalidArgumentError("nonlinear_amplitude must be nonnegative")
        if self.surface not in SURFACES:
            raise InvalidArgumentError(f"unknown surface spec {self.surface!r}; choose from {SURFACES}")


def _unit(points, lo, hi):
    return (np.asarray(points) - lo) / (hi - lo)


def bumps_surface(s_grid, t_grid, mirror=False):
    su = _unit(s_grid.points, s_grid.lo, s_grid.hi)
    if mirror:
        su = 1.0 - su
    tu = _unit(t_grid.points, t_grid.lo, t_grid.hi)
    ss, tt = np.meshgrid(su, tu, indexing="ij")
    w = np.zeros_like(ss)
    for sc, tc, a, sig in BUMPS:
        w += a * np.exp(-((ss - sc) ** 2 + (tt - tc) ** 2) / (2 * sig * sig))
    return w


def make_true_surface(spec, s_grid, t_grid, theta=None, mesh=None, degree=3, mirror=False):
    """True weight surface on the (s_grid x t_grid) mesh, shape (R, Q)."""
    if spec == "bumps":
        return bumps_surface(s_grid, t_grid, mirror)
    if spec == "planted_theta":
        if theta is None:
            raise InvalidArgumentError("planted_theta needs a coefficient matrix")
        theta = np.asarray(theta, dtype=np.float64)
        u, k = theta.shape
        return surface(theta, bspline_basis(s_grid, k, degree), bspline_basis(t_grid, u, degree))
    if spec == "custom":
        mesh = np.asarray(mesh, dtype=np.float64)
        if mesh.shape != (len(s_grid), len(t_grid)):
            raise InvalidArgumentError(f"custom mesh has shape {mesh.shape}")
        return mesh
    raise InvalidArgumentError(f"unknown surface spec {spec!r}")


def sample_predictors(n, grid, seed_or_rng, level=True):
    """``x(s) = c + sum_m (a_m sin(2 pi m u) + b_m cos(2 pi m u)) / m``, m = 1..10.

    ``u`` is the unit position on the grid and ``c, a_m, b_m`` are standard normal.
    The random level ``c`` (dropped with ``level=False``) matters: without it every
    curve integrates to zero over a full period and the s-average of any weight
    surface is unidentifiable.
    """
    rng = np.random.default_rng(seed_or_rng)
    u = _unit(grid.points, grid.lo, grid.hi)
    m = np.arange(1, NUM_HARMONICS + 1)
    a = rng.standard_normal((n, NUM_HARMONICS))
    b = rng.standard_normal((n, NUM_HARMONICS))
    arg = 2 * np.pi * m[:, None] * u[None, :]
    x = (a / m) @ np.sin(arg) + (b / m) @ np.cos(arg)
    if level:
        x += rng.standard_normal((n, 1))
    return x


def nonlinear_effect(x, s_grid, t_grid, amplitude):
    """``amplitude * sin(z^2) * sin(pi t)`` with z the first sine coefficient of x.

    The effect is even in the curve, so it is uncorrelated with every linear
    functional of the simulated predictors.
    """
    u = _unit(s_grid.points, s_grid.lo, s_grid.hi)
    z = 2.0 * s_grid.integrate(x * np.sin(2 * np.pi * u)) / s_grid.length
    profile = np.sin(np.pi * _unit(t_grid.points, t_grid.lo, t_grid.hi))
    return amplitude * np.outer(np.sin(z * z), profile)


def generate(config):
    """Simulate a dataset; returns ``(dataset, truth)``.

    ``truth`` holds ``surfaces`` (one R x Q mesh per predictor), ``linear`` and
    ``nonlinear`` signal components, ``noiseless`` outcomes and ``noise_sd``.
    """
    cfg = config
    s_grid = make_uniform_grid(*cfg.s_domain, cfg.R)
    t_grid = make_uniform_grid(*cfg.t_domain, cfg.Q)
    rng = np.random.default_rng(cfg.seed)
    xs, surfaces = [], []
    linear = np.zeros((cfg.n, cfg.Q))
    for j in range(cfg.J):
        theta = cfg.planted_theta[j] if cfg.planted_theta is not None else None
        mesh = cfg.custom_mesh[j] if cfg.custom_mesh is not None else None
        w = make_true_surface(cfg.surface, s_grid, t_grid, theta, mesh, cfg.degree, mirror=j % 2 == 1)
        x = sample_predictors(cfg.n, s_grid, rng, cfg.predictor_level)
        linear += (x * s_grid.quad_weights) @ w
        xs.append(x)
        surfaces.append(w)
    nonlinear = np.zeros_like(linear)
    if cfg.nonlinear_amplitude > 0:
        nonlinear = nonlinear_effect(xs[0], s_grid, t_grid, cfg.nonlinear_amplitude)
    signal = linear + nonlinear
    var = float(np.var(signal))
    if not var > 0:
        raise DegenerateDataError("simulated signal has zero variance")
    noise_sd = float(np.sqrt(var / cfg.snr))
    y = signal + noise_sd * rng.standard_normal(signal.shape)
    ds = FunctionalDataset(
        tuple(xs), tuple([s_grid] * cfg.J), y, t_grid, tuple(f"x{j}" for j in range(cfg.J))
    )
    truth = {
        "surfaces": surfaces,
        "linear": linear,
        "nonlinear": nonlinear,
        "noiseless": signal,
        "noise_sd": noise_sd,
        "s_grid": s_grid,
        "t_grid": t_grid,
    }
    return ds, truth
