"""The interpretable function-on-function part of the model.

Each predictor j contributes ``E_j theta_j' Psi`` where ``E_j`` (n x K_j) holds the
quadrature-encoded curves, ``theta_j`` is U x K_j and ``Psi`` (U x Q) is the outcome
basis evaluated on the outcome grid. The (n*Q) x (K*U) design matrix of the
long-format formulation is never built here.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidArgumentError
from .grid import DEFAULT_DEGREE, DEFAULT_NUM_BASIS, bspline_basis, penalty_gradient, penalty_quadratic


def encode(x, grid, s_basis):
    """Quadrature functionals ``sum_r w_r phi_k(s_r) x(s_r)``.

    Works on a single curve (length R, returns K) or a batch (n x R, returns n x K).
    """
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != len(grid) or s_basis.eval_matrix.shape[1] != len(grid):
        raise InvalidArgumentError(
            f"curve length {x.shape[-1]} does not match grid ({len(grid)}) / basis "
            f"({s_basis.eval_matrix.shape[1]})"
        )
    return x @ weighted_basis(grid, s_basis)


def weighted_basis(grid, s_basis):
    """R x K matrix of ``w_r * phi_k(s_r)``; encoding a batch is one product with it."""
    return grid.quad_weights[:, None] * s_basis.eval_matrix.T


def term_forward(encoded, theta, t_eval):
    """``(encoded @ theta.T) @ t_eval`` for one (K,) or many (n x K) encodings."""
    encoded = np.asarray(encoded, dtype=np.float64)
    theta = np.asarray(theta, dtype=np.float64)
    if theta.ndim != 2 or encoded.shape[-1] != theta.shape[1] or t_eval.shape[0] != theta.shape[0]:
        raise InvalidArgumentError(
            f"shapes do not conform: encoded {encoded.shape}, theta {theta.shape}, t_eval {t_eval.shape}"
        )
    return (encoded @ theta.T) @ t_eval


@dataclass(eq=False)
class StructuredTerm:
    theta: np.ndarray
    s_basis: object = field(repr=False)
    predictor_index: int = 0

    def __post_init__(self):
        self.theta = np.asarray(self.theta, dtype=np.float64)
        if self.theta.ndim != 2 or self.theta.shape[1] != self.s_basis.num_basis:
            raise InvalidArgumentError(
                f"theta shape {self.theta.shape} does not match s-basis size {self.s_basis.num_basis}"
            )


@dataclass(eq=False)
class StructuredPart:
    """Intercept coefficients, per-predictor terms and the shared outcome basis."""

    intercept_theta: np.ndarray
    terms: list
    t_basis: object = field(repr=False)

    def __post_init__(self):
        self.intercept_theta = np.asarray(self.intercept_theta, dtype=np.float64)
        u = self.t_basis.num_basis
        if self.intercept_theta.shape != (u,):
            raise InvalidArgumentError(f"intercept must have length U={u}")
        for term in self.terms:
            if term.theta.shape[0] != u:
                raise InvalidArgumentError(
                    f"term {term.predictor_index} has {term.theta.shape[0]} t-coefficients, expected {u}"
                )

    @property
    def t_eval(self):
        return self.t_basis.eval_matrix

    @property
    def num_coefficients(self):
        return self.intercept_theta.size + sum(t.theta.size for t in self.terms)

    def parameters(self):
        params = {"theta_0": self.intercept_theta}
        for j, term in enumerate(self.terms, start=1):
            params[f"theta_{j}"] = term.theta
        return params

    def encode(self, ds):
        """Encoded rows for every term; depends only on the data, so cache the result."""
        out = []
        for term in self.terms:
            j = term.predictor_index
            out.append(encode(ds.predictors[j], ds.predictor_grids[j], term.s_basis))
        return out

    def penalty(self, lambda_s, lambda_t):
        p_t = self.t_basis.penalty
        total = float(lambda_t * self.intercept_theta @ p_t @ self.intercept_theta)
        for term in self.terms:
            total += penalty_quadratic(term.theta, term.s_basis.penalty, p_t, lambda_s, lambda_t)
        return total


def build_structured_part(predictor_grids, outcome_grid, num_basis_s=DEFAULT_NUM_BASIS,
                          num_basis_t=DEFAULT_NUM_BASIS, degree=DEFAULT_DEGREE):
    """Zero-initialized structured part; predictors on a common grid share one basis.

    ``num_basis_s`` may be a single size or one size per predictor.
    """
    if np.isscalar(num_basis_s):
        num_basis_s = [int(num_basis_s)] * len(predictor_grids)
    if len(num_basis_s) != len(predictor_grids):
        raise InvalidArgumentError("need one s-basis size per predictor")
    t_basis = bspline_basis(outcome_grid, num_basis_t, degree)
    cache = []
    terms = []
    for j, (g, k) in enumerate(zip(predictor_grids, num_basis_s)):
        basis = next((b for b in cache if b.num_basis == k and b.grid.same_as(g)), None)
        if basis is None:
            basis = bspline_basis(g, k, degree)
            cache.append(basis)
        terms.append(StructuredTerm(np.zeros((num_basis_t, k)), basis, j))
    return StructuredPart(np.zeros(num_basis_t), terms, t_basis)


def _check_encoded(part, encoded_rows, t_eval):
    if len(encoded_rows) != len(part.terms):
        raise InvalidArgumentError(
            f"{len(encoded_rows)} encoded blocks for {len(part.terms)} terms"
        )
    if t_eval.shape[0] != part.intercept_theta.size:
        raise InvalidArgumentError("t_eval rows must equal the number of outcome basis functions")
    n = None
    for e, term in zip(encoded_rows, part.terms):
        if e.ndim != 2 or e.shape[1] != term.theta.shape[1]:
            raise InvalidArgumentError(f"encoded block shape {e.shape} does not match theta {term.theta.shape}")
        if n is not None and e.shape[0] != n:
            raise InvalidArgumentError("encoded blocks have differing row counts")
        n = e.shape[0]
    return n


def structured_forward(part, encoded_rows, t_eval=None, n=None):
    """n x Q predictions of the structured part (intercept plus all terms).

    With no terms, ``n`` gives the number of rows to broadcast the intercept to.
    """
    t_eval = part.t_eval if t_eval is None else t_eval
    rows = _check_encoded(part, encoded_rows, t_eval)
    if rows is None:
        if n is None:
            raise InvalidArgumentError("n is required when the part has no terms")
        rows = n
    elif n is not None and n != rows:
        raise InvalidArgumentError(f"n={n} does not match encoded rows ({rows})")
    latent = np.broadcast_to(part.intercept_theta, (rows, t_eval.shape[0])).copy()
    for e, term in zip(encoded_rows, part.terms):
        latent += e @ term.theta.T
    return latent @ t_eval


def structured_gradients(part, encoded_rows, t_eval, upstream, lambda_s=0.0, lambda_t=0.0):
    """Gradients of ``sum(upstream * structured_forward) + penalty``.

    Returns ``(grad_intercept, [grad_theta_j, ...])`` with the parameter shapes.
    """
    t_eval = part.t_eval if t_eval is None else t_eval
    upstream = np.asarray(upstream, dtype=np.float64)
    rows = _check_encoded(part, encoded_rows, t_eval)
    if upstream.ndim != 2 or upstream.shape[1] != t_eval.shape[1] or (
        rows is not None and upstream.shape[0] != rows
    ):
        raise InvalidArgumentError(f"upstream shape {upstream.shape} does not conform")
    # project the upstream onto the outcome basis once, shared by all terms
    g_latent = upstream @ t_eval.T  # n x U
    p_t = part.t_basis.penalty
    g0 = g_latent.sum(axis=0)
    if lambda_t:
        g0 = g0 + 2.0 * lambda_t * (p_t @ part.intercept_theta)
    grads = []
    for e, term in zip(encoded_rows, part.terms):
        g = g_latent.T @ e
        if lambda_s or lambda_t:
            g += penalty_gradient(term.theta, term.s_basis.penalty, p_t, lambda_s, lambda_t)
        grads.append(g)
    return g0, grads


def surface(theta, s_basis, t_basis, s_points=None, t_points=None):
    """Weight surface ``w(s, t) = psi(t)' theta phi(s)`` on a mesh, shape (len(s), len(t))."""
    theta = np.asarray(theta, dtype=np.float64)
    if theta.shape != (t_basis.num_basis, s_basis.num_basis):
        raise InvalidArgumentError(
            f"theta shape {theta.shape} does not match bases ({t_basis.num_basis}, {s_basis.num_basis})"
        )
    phi = s_basis.eval_matrix if s_points is None else s_basis.evaluate(s_points)
    psi = t_basis.eval_matrix if t_points is None else t_basis.evaluate(t_points)
    return phi.T @ theta.T @ psi
