"""Post-hoc orthogonalization of the deep part against the structured basis.

For the stacked training design ``Omega`` (N = n*Q rows, one per observation and
outcome grid point, observation-major) the correction is::

    theta_corrected = theta + pinv(Omega) @ lambda_minus
    lambda_perp     = lambda_minus - Omega @ pinv(Omega) @ lambda_minus

Column layout: the intercept block (U columns) comes first, then one block of
U*K_j columns per term. Row (i, q) of term block j is ``kron(psi(t_q), E_j[i])``,
so the matching coefficients are ``vec(theta_j.T)`` with column-major ``vec``,
which is ``theta_j.ravel()`` in numpy's default order.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass, field

import numpy as np

from .errors import CapacityError, ContractViolation, InvalidArgumentError
from .structured import StructuredPart, StructuredTerm, surface

GRAM_THRESHOLD = 50_000
DEFAULT_MEMORY_BUDGET = 2 * 1024**3


def vec_theta(theta):
    """Column-major vectorization of ``theta.T``."""
    return np.asarray(theta).T.reshape(-1, order="F")


def unvec_theta(vec, u, k):
    return np.asarray(vec).reshape((k, u), order="F").T


def stack_theta(part):
    return np.concatenate([part.intercept_theta] + [vec_theta(t.theta) for t in part.terms])


def block_offsets(part):
    offsets, start = [], 0
    for size in [part.intercept_theta.size] + [t.theta.size for t in part.terms]:
        offsets.append((start, start + size))
        start += size
    return offsets


def unstack_theta(vec, part):
    """Split a stacked coefficient vector into ``(intercept, [theta_j, ...])``."""
    vec = np.asarray(vec, dtype=np.float64)
    offs = block_offsets(part)
    if vec.shape != (offs[-1][1],):
        raise ContractViolation(
            f"stacked coefficients have length {vec.size}, the part needs {offs[-1][1]}"
        )
    u = part.intercept_theta.size
    intercept = vec[offs[0][0]:offs[0][1]].copy()
    thetas = [
        unvec_theta(vec[a:b], u, t.theta.shape[1]).copy()
        for (a, b), t in zip(offs[1:], part.terms)
    ]
    return intercept, thetas


class OmegaMatrix:
    """The stacked basis-product design, held implicitly and optionally densified.

    ``encoded`` lists the per-block encodings with a column of ones for the
    intercept first, so every block is ``kron(psi(t_q), encoded[b][i])``.
    """

    def __init__(self, encoded, t_eval, values=None):
        self.encoded = [np.asarray(e, dtype=np.float64) for e in encoded]
        self.t_eval = np.asarray(t_eval, dtype=np.float64)
        self.n = self.encoded[0].shape[0]
        self.u, self.q = self.t_eval.shape
        sizes = [self.u * e.shape[1] for e in self.encoded]
        ends = np.cumsum(sizes)
        self.block_offsets = [(int(e - s), int(e)) for s, e in zip(sizes, ends)]
        self.values = values

    @property
    def shape(self):
        return (self.n * self.q, self.block_offsets[-1][1])

    def block_dense(self, b):
        e = self.encoded[b]
        return np.einsum("uq,ik->iquk", self.t_eval, e).reshape(self.n * self.q, -1)

    def dense(self):
        return np.concatenate([self.block_dense(b) for b in range(len(self.encoded))], axis=1)

    def matvec(self, theta):
        """``Omega @ theta`` as an n x Q array without forming Omega."""
        latent = np.zeros((self.n, self.u))
        for (a, b), e in zip(self.block_offsets, self.encoded):
            latent += e @ theta[a:b].reshape(self.u, e.shape[1]).T
        return latent @ self.t_eval

    def rmatvec(self, lam):
        """``Omega.T @ vec(lam)`` for an n x Q array ``lam``."""
        g = np.asarray(lam, dtype=np.float64).reshape(self.n, self.q) @ self.t_eval.T
        return np.concatenate([(g.T @ e).ravel() for e in self.encoded])

    def gram(self):
        """``Omega.T @ Omega`` from Kronecker blocks ``(Psi Psi') x (E_a' E_b)``."""
        pp = self.t_eval @ self.t_eval.T
        p = self.shape[1]
        out = np.empty((p, p))
        for a, (a0, a1) in enumerate(self.block_offsets):
            for b, (b0, b1) in enumerate(self.block_offsets):
                if b < a:
                    out[a0:a1, b0:b1] = out[b0:b1, a0:a1].T
                    continue
                out[a0:a1, b0:b1] = np.kron(pp, self.encoded[a].T @ self.encoded[b])
        return out


def assemble_omega(part, encoded_rows, t_eval=None, n=None, q=None, memory_budget=DEFAULT_MEMORY_BUDGET,
                   dense=True):
    """Stack the design for all n*Q training points.

    With ``dense=False`` only the implicit form is kept, which is all the Gram
    path needs.
    """
    t_eval = part.t_eval if t_eval is None else t_eval
    if encoded_rows:
        rows = encoded_rows[0].shape[0]
        if n is not None and n != rows:
            raise InvalidArgumentError(f"n={n} does not match encoded rows ({rows})")
        n = rows
    elif n is None:
        raise InvalidArgumentError("n is required when the part has no terms")
    if q is not None and q != t_eval.shape[1]:
        raise InvalidArgumentError(f"Q={q} does not match the outcome basis evaluations")
    if len(encoded_rows) != len(part.terms):
        raise InvalidArgumentError("one encoded block per term is required")
    om = OmegaMatrix([np.ones((n, 1))] + list(encoded_rows), t_eval)
    if dense:
        nbytes = 8 * om.shape[0] * om.shape[1]
        if memory_budget is not None and nbytes > memory_budget:
            raise CapacityError(
                f"dense Omega needs {nbytes} bytes, over the budget of {memory_budget}; "
                "use the Gram path (method='gram'), which never forms Omega"
            )
        om.values = om.dense()
    return om


@dataclass
class PhoResult:
    theta_corrected: np.ndarray
    correction: np.ndarray
    lambda_perp: np.ndarray
    rank: int
    residual_norm: float
    lambda_minus_norm: float
    method: str
    block_offsets: list = field(default_factory=list)

    def split(self, part):
        return unstack_theta(self.theta_corrected, part)

    def report(self, part):
        before = stack_theta(part)
        blocks = []
        for j, (a, b) in enumerate(self.block_offsets):
            blocks.append({
                "term": j,
                "norm_before": float(np.linalg.norm(before[a:b])),
                "norm_after": float(np.linalg.norm(self.theta_corrected[a:b])),
            })
        return {
            "rank": int(self.rank),
            "residual_norm": float(self.residual_norm),
            "lambda_minus_norm": float(self.lambda_minus_norm),
            "method": self.method,
            "num_rows": int(self.lambda_perp.size),
            "num_coefficients": int(self.theta_corrected.size),
            "terms": blocks,
        }


def _rtol(shape):
    return 1e-10 * max(shape)


def pho_correct(omega, theta, lambda_minus, method="auto", rtol=None):
    """Correct stacked coefficients and orthogonalize the deep predictions.

    ``method`` is ``"svd"`` (needs a dense ``omega``), ``"gram"`` or ``"auto"``
    (Gram when N > 50,000 or when ``omega`` is not dense).
    """
    theta = np.asarray(theta, dtype=np.float64)
    lam = np.asarray(lambda_minus, dtype=np.float64)
    n_rows, p = omega.shape
    if theta.shape != (p,):
        raise InvalidArgumentError(f"theta has shape {theta.shape}, expected ({p},)")
    if lam.size != n_rows:
        raise InvalidArgumentError(f"lambda_minus has {lam.size} entries, expected {n_rows}")
    if not (np.all(np.isfinite(theta)) and np.all(np.isfinite(lam))):
        raise InvalidArgumentError("non-finite inputs to orthogonalization")
    lam = lam.reshape(omega.n, omega.q)
    rtol = _rtol(omega.shape) if rtol is None else rtol
    if method == "auto":
        method = "gram" if (n_rows > GRAM_THRESHOLD or omega.values is None) else "svd"
    if method == "svd":
        if omega.values is None:
            raise InvalidArgumentError("the SVD path needs a dense Omega")
        u_, s, vt = np.linalg.svd(omega.values, full_matrices=False)
        keep = s > rtol * s[0] if s.size else s.astype(bool)
        u_, s, vt = u_[:, keep], s[keep], vt[keep]
        coef = u_.T @ lam.ravel()
        correction = vt.T @ (coef / s)
        perp = (lam.ravel() - u_ @ coef).reshape(lam.shape)
        rank = int(keep.sum())
    elif method == "gram":
        evals, evecs = np.linalg.eigh(omega.gram())
        top = evals[-1] if evals.size else 0.0
        keep = evals > (rtol * rtol) * top if top > 0 else np.zeros_like(evals, dtype=bool)
        v = evecs[:, keep]
        correction = v @ ((v.T @ omega.rmatvec(lam)) / evals[keep])
        perp = lam - omega.matvec(correction)
        rank = int(keep.sum())
    else:
        raise InvalidArgumentError(f"unknown method {method!r}")
    residual = float(np.linalg.norm(omega.rmatvec(perp)))
    return PhoResult(
        theta_corrected=theta + correction,
        correction=correction,
        lambda_perp=perp,
        rank=rank,
        residual_norm=residual,
        lambda_minus_norm=float(np.linalg.norm(lam)),
        method=method,
        block_offsets=list(omega.block_offsets),
    )


def corrected_surfaces(result, part, s_points=None, t_points=None):
    """One weight surface per term from the corrected coefficients."""
    if result.block_offsets != block_offsets(part):
        raise ContractViolation("orthogonalization result layout does not match the structured part")
    _, thetas = result.split(part)
    return [surface(th, t.s_basis, part.t_basis, s_points, t_points) for th, t in zip(thetas, part.terms)]


def _with_coefficients(part, intercept, thetas):
    terms = [StructuredTerm(th, t.s_basis, t.predictor_index) for th, t in zip(thetas, part.terms)]
    return StructuredPart(intercept, terms, part.t_basis)


def orthogonalize_model(model, ds, method="auto", memory_budget=DEFAULT_MEMORY_BUDGET, rtol=None):
    """Apply the correction to a trained model using the rows of ``ds``.

    Returns ``(corrected_model, result)``. The corrected model keeps its deep
    network and subtracts ``Omega(x) @ correction`` from its output, so its
    predictions are unchanged everywhere while ``predict_parts`` now returns the
    corrected structured part and the orthogonalized deep part.
    """
    data = model.prepare(ds)
    lam_plus, lam_minus, _ = model.parts_prepared(data)
    part = model.structured
    if method == "auto" and data.n * ds.outcome.shape[1] > GRAM_THRESHOLD:
        method = "gram"
    om = assemble_omega(part, data.encoded, n=data.n, memory_budget=memory_budget,
                        dense=method != "gram")
    result = pho_correct(om, stack_theta(part), lam_minus, method, rtol)
    fixed = copy.deepcopy(model)
    intercept, thetas = result.split(part)
    fixed.structured = _with_coefficients(fixed.structured, intercept, thetas)
    if model.deep is not None:
        prev = np.zeros_like(result.correction) if model.deep_offset is None else stack_theta(model.deep_offset)
        oi, ot = unstack_theta(prev + result.correction, part)
        fixed.deep_offset = _with_coefficients(fixed.structured, oi, ot)
    return fixed, result
