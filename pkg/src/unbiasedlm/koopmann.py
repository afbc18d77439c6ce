"""The Koopmann class of unbiased LPQ estimators and quadratic nullspace constructions.

An LPQ estimator ``A'y + (y'B_j y)_j`` belongs to the class for a covariance
shape ``sigma`` when ``A'X = I``, ``tr(B_j sigma) = 0`` and ``X'B_j X = 0``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .estimator import IdentificationError, LPQEstimator, gls, ols
from .linalg import as_sym, null_space, sym_dim, sym_unvec, sym_vec
from .model import DesignMatrix


class PreconditionError(ValueError):
    """Inputs violate a size or rank condition of the construction."""


def gram_rows(x: np.ndarray) -> np.ndarray:
    """Rows ``sym_vec(sym(x_q x_p'))`` for ``p <= q``; row ``(p, q)`` dotted with
    ``sym_vec(B)`` gives ``(X'BX)[p, q]``."""
    k = x.shape[1]
    rows = []
    for p in range(k):
        for q in range(p, k):
            rows.append(sym_vec(np.outer(x[:, q], x[:, p])))
    return np.asarray(rows).reshape(len(rows), sym_dim(x.shape[0]))


@dataclass(frozen=True)
class KoopmannConstraints:
    """Linear constraint system for membership in the Koopmann class.

    ``linear_block @ vec(A) == vec(I_k)`` encodes ``A'X = I`` (``vec`` stacks
    the columns of ``A``); ``kernel_block @ sym_vec(B_j) == 0`` encodes the trace
    condition (first row) and ``X'B_j X = 0`` (remaining rows).
    """

    design: DesignMatrix
    sigma: np.ndarray
    linear_block: np.ndarray
    kernel_block: np.ndarray

    @property
    def n(self) -> int:
        return self.design.n

    @property
    def k(self) -> int:
        return self.design.k


def build_constraints(design, sigma) -> KoopmannConstraints:
    design = DesignMatrix.coerce(design)
    sigma = as_sym(sigma)
    if sigma.shape != (design.n, design.n):
        raise ValueError(f"sigma must be {design.n}x{design.n}")
    x = design.x
    linear = np.kron(np.eye(design.k), x.T)
    kernel = np.vstack([sym_vec(sigma)[None, :], gram_rows(x)])
    for m in (sigma, linear, kernel):
        m.setflags(write=False)
    return KoopmannConstraints(design, sigma, linear, kernel)


@dataclass(frozen=True)
class Membership:
    """Outcome of :func:`is_member` with the worst residual per constraint family."""

    member: bool
    linear: float
    trace: float
    gram: float

    def __bool__(self) -> bool:
        return self.member

    def residuals(self) -> dict:
        return {"linear": self.linear, "trace": self.trace, "gram": self.gram}


def is_member(u: LPQEstimator, c: KoopmannConstraints, tol: float = 1e-10) -> Membership:
    if (u.n, u.k) != (c.n, c.k):
        raise ValueError(f"estimator is {u.n}x{u.k}, constraints are {c.n}x{c.k}")
    x = c.design.x
    linear = float(np.abs(u.a.T @ x - np.eye(c.k)).max())
    trace = float(max(abs(np.trace(b @ c.sigma)) for b in u.kernels))
    gram = float(max(np.abs(x.T @ b @ x).max() for b in u.kernels))
    ok = linear < tol and trace < tol and gram < tol
    return Membership(ok, linear, trace, gram)


def kernel_null_space(c: KoopmannConstraints):
    return null_space(c.kernel_block)


def parameterize_member(c: KoopmannConstraints):
    """Affine parameterization ``base + span(directions)`` of the class.

    ``base`` is GLS with zero kernels (OLS when ``sigma`` leaves beta
    unidentified). Directions perturb one coordinate at a time: first the
    columns of ``A`` along ``null(X')``, then the kernels along
    ``null(kernel_block)``.
    """
    n, k = c.n, c.k
    try:
        base = gls(c.design, c.sigma)
    except IdentificationError:
        base = ols(c.design)
    a_null = null_space(c.design.x.T).basis
    b_null = kernel_null_space(c).basis
    zeros_a = np.zeros((n, k))
    zeros_b = np.zeros((k, n, n))
    directions = []
    for j in range(k):
        for v in a_null.T:
            a = zeros_a.copy()
            a[:, j] = v
            directions.append(LPQEstimator(a, zeros_b))
    for j in range(k):
        for v in b_null.T:
            kernels = zeros_b.copy()
            kernels[j] = sym_unvec(v, n)
            directions.append(LPQEstimator(zeros_a, kernels))
    return base, directions


def combine(base: LPQEstimator, directions, coefs) -> LPQEstimator:
    a = base.a.copy()
    kernels = base.kernels.copy()
    for d, t in zip(directions, np.asarray(coefs, dtype=float)):
        a += t * d.a
        kernels += t * d.kernels
    return LPQEstimator(a, kernels)


def zero_diagonal_rows(n: int) -> np.ndarray:
    eye = np.eye(n)
    return np.stack([sym_vec(np.outer(eye[i], eye[i])) for i in range(n)])


def _normalize_sign(b: np.ndarray) -> np.ndarray:
    rows, cols = np.triu_indices(b.shape[0], 1)
    off = b[rows, cols]
    nz = np.flatnonzero(np.abs(off) > 1e-12)
    if nz.size and off[nz[0]] < 0:
        b = -b
    return b


def construct_quadratic_null(design) -> np.ndarray:
    """A nonzero symmetric ``B`` with zero diagonal and ``X'BX = 0``.

    Requires ``n >= max(k + 2, 4)``. The result has unit Frobenius norm and its
    first nonzero off-diagonal entry (row-major, upper triangle) is positive.
    """
    design = DesignMatrix.coerce(design)
    n, k = design.n, design.k
    if n < max(k + 2, 4):
        raise PreconditionError(
            f"a zero-diagonal quadratic null needs n >= max(k + 2, 4); got n={n}, k={k}"
        )
    system = np.vstack([zero_diagonal_rows(n), gram_rows(design.x)])
    ns = null_space(system)
    # n + k(k+1)/2 rows against n(n+1)/2 unknowns leaves at least n - 1 free directions
    assert ns.dim > 0, "empty nullspace under n >= max(k + 2, 4)"
    b = sym_unvec(ns.basis[:, 0], n)
    b = b / np.linalg.norm(b)
    return _normalize_sign(b)


def whitener(sigma) -> np.ndarray:
    """``W`` with ``W sigma W' = I`` mapping ``{V D V'}`` onto diagonal matrices.

    For diagonal ``sigma`` this is ``diag(sigma)^(-1/2)``; otherwise
    ``D^(-1/2) V'`` from the eigendecomposition ``sigma = V D V'``.
    """
    sigma = as_sym(sigma)
    if not np.any(sigma - np.diag(np.diag(sigma))):
        d = np.diag(sigma)
        if d.min() <= 0:
            raise np.linalg.LinAlgError("sigma is singular")
        return np.diag(1.0 / np.sqrt(d))
    w, v = np.linalg.eigh(sigma)
    if w.min() <= 1e-12 * max(1.0, w.max()):
        raise np.linalg.LinAlgError("sigma is singular")
    return (v / np.sqrt(w)).T


def quadratic_null_residuals(design, b) -> dict:
    x = DesignMatrix.coerce(design).x
    b = np.asarray(b, dtype=float)
    return {
        "diagonal": float(np.abs(np.diag(b)).max()),
        "gram": float(np.abs(x.T @ b @ x).max()),
        "symmetry": float(np.abs(b - b.T).max()),
    }


def make_ub_estimator(design, b, tol: float = 1e-10) -> LPQEstimator:
    """OLS plus the same zero-mean quadratic ``y'By`` in every coordinate."""
    design = DesignMatrix.coerce(design)
    b = np.asarray(b, dtype=float)
    if b.shape != (design.n, design.n):
        raise ValueError(f"b must be {design.n}x{design.n}")
    res = quadratic_null_residuals(design, b)
    scale = max(1.0, float(np.abs(b).max()))
    bad = {name: r for name, r in res.items() if r >= tol * scale}
    if bad:
        raise ValueError(f"b violates the quadratic-null constraints: {bad}")
    base = ols(design)
    return LPQEstimator(base.a, np.stack([as_sym(b)] * design.k))


def whitened_ub_estimator(design, sigma) -> LPQEstimator:
    """GLS plus a quadratic that is unbiased-for-zero under every covariance ``V D V'``.

    Built in whitened coordinates ``W y`` and mapped back, so the kernel is
    ``W' B W`` for the zero-diagonal null ``B`` of the whitened design.
    """
    design = DesignMatrix.coerce(design)
    w = whitener(sigma)
    xw = DesignMatrix(w @ design.x)
    b = construct_quadratic_null(xw)
    kernel = as_sym(w.T @ b @ w)
    return LPQEstimator(gls(design, sigma).a, np.stack([kernel] * design.k))
