"""Evaluation grids, trapezoidal quadrature, B-spline bases and difference penalties.

Coefficient matrices are laid out as ``theta[u, k]`` with ``u`` running over the
outcome (t) basis and ``k`` over the predictor (s) basis, so s-differences run
across columns and t-differences across rows.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidArgumentError

DEFAULT_NUM_BASIS = 20
DEFAULT_DEGREE = 3


def _frozen(a):
    a = np.array(a, dtype=np.float64, copy=True)
    a.flags.writeable = False
    return a


def trapezoid_weights(points):
    """Composite trapezoid weights for strictly increasing ``points``.

    >>> trapezoid_weights([0.0, 1.0, 3.0]).tolist()
    [0.5, 1.5, 1.0]
    """
    p = np.asarray(points, dtype=np.float64)
    if p.ndim != 1 or p.size < 2:
        raise InvalidArgumentError("need a 1-d sequence of at least 2 points")
    if not np.all(np.isfinite(p)):
        raise InvalidArgumentError("grid points must be finite")
    d = np.diff(p)
    if np.any(d <= 0):
        raise InvalidArgumentError("grid points must be strictly increasing")
    w = np.empty_like(p)
    w[0] = d[0] / 2
    w[-1] = d[-1] / 2
    w[1:-1] = (d[:-1] + d[1:]) / 2
    return w


@dataclass(frozen=True, eq=False)
class Grid:
    """Ordered evaluation points of a functional domain with trapezoid weights."""

    points: np.ndarray
    quad_weights: np.ndarray = field(repr=False)

    def __init__(self, points):
        w = trapezoid_weights(points)
        object.__setattr__(self, "points", _frozen(points))
        object.__setattr__(self, "quad_weights", _frozen(w))

    def __len__(self):
        return self.points.size

    @property
    def lo(self):
        return float(self.points[0])

    @property
    def hi(self):
        return float(self.points[-1])

    @property
    def length(self):
        return self.hi - self.lo

    def integrate(self, values, axis=-1):
        """Trapezoid integral of ``values`` sampled on the grid along ``axis``."""
        values = np.asarray(values, dtype=np.float64)
        return np.tensordot(values, self.quad_weights, axes=([axis], [0]))

    def same_as(self, other):
        return self is other or (
            len(self) == len(other) and np.array_equal(self.points, other.points)
        )

    def to_spec(self):
        return {"points": self.points.tolist()}


def make_uniform_grid(lo, hi, count):
    if int(count) != count or count < 2:
        raise InvalidArgumentError(f"count must be an integer >= 2, got {count!r}")
    if not lo < hi:
        raise InvalidArgumentError(f"need lo < hi, got lo={lo}, hi={hi}")
    return Grid(np.linspace(lo, hi, int(count)))


def grid_from_spec(spec):
    """Build a grid from ``{"points": [...]}`` or ``{"lo": a, "hi": b, "count": m}``."""
    if not isinstance(spec, dict):
        raise InvalidArgumentError(f"grid spec must be a mapping, got {type(spec).__name__}")
    if "points" in spec:
        extra = set(spec) - {"points"}
        if extra:
            raise InvalidArgumentError(f"unknown grid spec keys: {sorted(extra)}")
        return Grid(spec["points"])
    keys = {"lo", "hi", "count"}
    if set(spec) != keys:
        raise InvalidArgumentError(
            f"grid spec needs either 'points' or exactly {sorted(keys)}, got {sorted(spec)}"
        )
    return make_uniform_grid(float(spec["lo"]), float(spec["hi"]), spec["count"])


def difference_matrix(k, order=1):
    return np.diff(np.eye(k), order, axis=0)


def difference_penalty(k, order=1):
    d = difference_matrix(k, order)
    return d.T @ d


def clamped_knots(lo, hi, num_basis, degree):
    n_interior = num_basis - degree - 1
    inner = np.linspace(lo, hi, n_interior + 2)
    return np.concatenate([np.full(degree, lo), inner, np.full(degree, hi)])


def cox_de_boor(x, knots, degree):
    """Evaluate all B-splines of ``degree`` on ``knots`` at ``x``.

    Returns an array of shape (len(x), len(knots) - degree - 1). The right end of
    the knot span is included in the last non-degenerate interval so the basis
    keeps partition of unity at the boundary.
    """
    x = np.asarray(x, dtype=np.float64)
    t = np.asarray(knots, dtype=np.float64)
    xc = x[:, None]
    b = ((t[:-1] <= xc) & (xc < t[1:])).astype(np.float64)
    last = np.nonzero(t[:-1] < t[1:])[0][-1]
    b[x == t[-1], last] = 1.0
    for p in range(1, degree + 1):
        nb = t.size - 1 - p
        left_den = t[p : p + nb] - t[:nb]
        right_den = t[p + 1 : p + 1 + nb] - t[1 : 1 + nb]
        with np.errstate(divide="ignore", invalid="ignore"):
            left = np.where(left_den > 0, (xc - t[:nb]) / left_den, 0.0)
            right = np.where(right_den > 0, (t[p + 1 : p + 1 + nb] - xc) / right_den, 0.0)
        b = left * b[:, :nb] + right * b[:, 1 : nb + 1]
    return b


@dataclass(frozen=True, eq=False)
class BasisSystem:
    """A B-spline basis evaluated on a grid, with its first-difference penalty.

    ``eval_matrix`` has shape (num_basis, len(grid)); column r holds every basis
    function at grid point r.
    """

    knots: np.ndarray
    degree: int
    num_basis: int
    eval_matrix: np.ndarray = field(repr=False)
    penalty: np.ndarray = field(repr=False)
    grid: Grid = field(repr=False)

    @property
    def lo(self):
        return float(self.knots[0])

    @property
    def hi(self):
        return float(self.knots[-1])

    def evaluate(self, points):
        """Basis values at arbitrary in-domain points, shape (num_basis, len(points))."""
        p = np.atleast_1d(np.asarray(points, dtype=np.float64))
        span = self.hi - self.lo
        tol = 1e-12 * max(span, 1.0)
        if np.any(p < self.lo - tol) or np.any(p > self.hi + tol):
            raise InvalidArgumentError(
                f"evaluation points must lie in [{self.lo}, {self.hi}]"
            )
        p = np.clip(p, self.lo, self.hi)
        return cox_de_boor(p, self.knots, self.degree).T

    def to_meta(self):
        return {
            "knots": self.knots.tolist(),
            "degree": self.degree,
            "num_basis": self.num_basis,
            "grid": self.grid.to_spec(),
        }


def bspline_basis(grid, num_basis=DEFAULT_NUM_BASIS, degree=DEFAULT_DEGREE):
    """Clamped uniform B-spline basis on the range of ``grid``."""
    if int(degree) != degree or degree < 0:
        raise InvalidArgumentError(f"degree must be a nonnegative integer, got {degree!r}")
    if int(num_basis) != num_basis or num_basis < degree + 1:
        raise InvalidArgumentError(
            f"num_basis={num_basis} is too small for degree {degree} (need >= {degree + 1})"
        )
    degree, num_basis = int(degree), int(num_basis)
    knots = clamped_knots(grid.lo, grid.hi, num_basis, degree)
    ev = cox_de_boor(grid.points, knots, degree).T
    return BasisSystem(
        knots=_frozen(knots),
        degree=degree,
        num_basis=num_basis,
        eval_matrix=_frozen(ev),
        penalty=_frozen(difference_penalty(num_basis)),
        grid=grid,
    )


def penalty_quadratic(theta, p_s, p_t, lambda_s, lambda_t):
    """``lambda_s * tr(theta P_s theta') + lambda_t * tr(theta' P_t theta)``."""
    theta = np.asarray(theta, dtype=np.float64)
    if lambda_s < 0 or lambda_t < 0:
        raise InvalidArgumentError("smoothing parameters must be nonnegative")
    if theta.ndim != 2:
        raise InvalidArgumentError("theta must be a matrix")
    u, k = theta.shape
    if np.shape(p_s) != (k, k) or np.shape(p_t) != (u, u):
        raise InvalidArgumentError(
            f"penalty shapes {np.shape(p_s)}, {np.shape(p_t)} do not conform to theta {theta.shape}"
        )
    pen_s = np.sum(theta * (theta @ p_s))
    pen_t = np.sum(theta * (p_t @ theta))
    return float(lambda_s * pen_s + lambda_t * pen_t)


def penalty_gradient(theta, p_s, p_t, lambda_s, lambda_t):
    g = np.zeros_like(theta)
    if lambda_s:
        g += 2.0 * lambda_s * (theta @ p_s)
    if lambda_t:
        g += 2.0 * lambda_t * (p_t @ theta)
    return g
