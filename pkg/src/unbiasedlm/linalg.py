"""Dense linear-algebra helpers for symmetric matrices and subspaces.

The symmetric vectorization used throughout the package stacks the upper
triangle row by row and multiplies off-diagonal entries by sqrt(2), so that

    sym_vec(A) @ sym_vec(B) == trace(A @ B)

for symmetric ``A`` and ``B``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import subspace_angles

RANK_TOL = 1e-9
SQRT2 = np.sqrt(2.0)


def as_sym(m) -> np.ndarray:
    """Return ``m`` as a square float array with exact symmetry enforced."""
    m = np.asarray(m, dtype=float)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {m.shape}")
    return (m + m.T) / 2.0


def sym_dim(n: int) -> int:
    """Length of ``sym_vec`` for an ``n x n`` matrix."""
    return n * (n + 1) // 2


def _triu(n: int):
    return np.triu_indices(n)


def sym_vec(m) -> np.ndarray:
    """Scaled half-vectorization of a symmetric matrix.

    Examples
    --------
    >>> sym_vec(np.eye(2))
    array([1., 0., 1.])
    """
    m = as_sym(m)
    n = m.shape[0]
    rows, cols = _triu(n)
    v = m[rows, cols].copy()
    v[rows != cols] *= SQRT2
    return v


def sym_unvec(v, dim: int | None = None) -> np.ndarray:
    """Inverse of :func:`sym_vec`."""
    v = np.asarray(v, dtype=float).ravel()
    if dim is None:
        dim = int(round((np.sqrt(8 * v.size + 1) - 1) / 2))
    if v.size != sym_dim(dim):
        raise ValueError(
            f"sym_vec of a {dim}x{dim} matrix has length {sym_dim(dim)}, got {v.size}"
        )
    rows, cols = _triu(dim)
    vals = v.copy()
    vals[rows != cols] /= SQRT2
    m = np.zeros((dim, dim))
    m[rows, cols] = vals
    m[cols, rows] = vals
    return m


def pseudo_inverse(m, tol: float = RANK_TOL) -> np.ndarray:
    """Moore-Penrose inverse, dropping singular values below ``tol * s_max``."""
    return np.linalg.pinv(np.asarray(m, dtype=float), rcond=tol)


def matrix_rank(m, tol: float = RANK_TOL) -> int:
    m = np.atleast_2d(np.asarray(m, dtype=float))
    if m.size == 0:
        return 0
    s = np.linalg.svd(m, compute_uv=False)
    if s.size == 0 or s[0] == 0.0:
        return 0
    return int(np.sum(s > tol * s[0]))


@dataclass(frozen=True)
class Subspace:
    """A linear subspace of R^d held as an orthonormal column basis."""

    basis: np.ndarray

    def __post_init__(self):
        b = np.asarray(self.basis, dtype=float)
        if b.ndim != 2:
            raise ValueError("basis must be a 2-d array with basis vectors as columns")
        if b.shape[1] > b.shape[0]:
            raise ValueError("more basis vectors than the ambient dimension")
        gram = b.T @ b
        if not np.allclose(gram, np.eye(b.shape[1]), atol=1e-10, rtol=0.0):
            raise ValueError("basis vectors are not orthonormal")
        b.setflags(write=False)
        object.__setattr__(self, "basis", b)

    @property
    def ambient_dim(self) -> int:
        return self.basis.shape[0]

    @property
    def dim(self) -> int:
        return self.basis.shape[1]

    def projector(self) -> np.ndarray:
        return self.basis @ self.basis.T

    def contains(self, v, tol: float = 1e-8) -> bool:
        v = np.asarray(v, dtype=float)
        resid = v - self.projector() @ v
        return bool(np.linalg.norm(resid) <= tol * max(1.0, np.linalg.norm(v)))

    def __repr__(self):
        return f"Subspace(dim={self.dim}, ambient_dim={self.ambient_dim})"


def null_space(m, tol: float = RANK_TOL) -> Subspace:
    """Orthonormal basis of ``{v : m @ v = 0}`` via the SVD.

    Singular values at or below ``tol`` times the largest one count as zero.
    """
    m = np.atleast_2d(np.asarray(m, dtype=float))
    ncols = m.shape[1]
    if m.shape[0] == 0 or not np.any(m):
        return Subspace(np.eye(ncols))
    _, s, vt = np.linalg.svd(m, full_matrices=True)
    rank = int(np.sum(s > tol * s[0]))
    return Subspace(vt[rank:].T.copy())


def column_space(m, tol: float = RANK_TOL) -> Subspace:
    """Orthonormal basis of the span of the columns of ``m``."""
    m = np.atleast_2d(np.asarray(m, dtype=float))
    if m.shape[1] == 0 or not np.any(m):
        return Subspace(np.zeros((m.shape[0], 0)))
    u, s, _ = np.linalg.svd(m, full_matrices=False)
    rank = int(np.sum(s > tol * s[0]))
    return Subspace(u[:, :rank].copy())


def row_space(m, tol: float = RANK_TOL) -> Subspace:
    return column_space(np.atleast_2d(np.asarray(m, dtype=float)).T, tol)


def orthogonal_complement(sub: Subspace, tol: float = RANK_TOL) -> Subspace:
    if sub.dim == 0:
        return Subspace(np.eye(sub.ambient_dim))
    return null_space(sub.basis.T, tol)


def principal_angles(a: Subspace, b: Subspace) -> np.ndarray:
    """Principal angles (radians, descending) between two subspaces."""
    if a.ambient_dim != b.ambient_dim:
        raise ValueError(
            f"ambient dimensions differ: {a.ambient_dim} vs {b.ambient_dim}"
        )
    if a.dim == 0 or b.dim == 0:
        return np.zeros(0)
    return subspace_angles(a.basis, b.basis)


def subspace_equal(a: Subspace, b: Subspace, tol: float = 1e-8) -> bool:
    """True iff the subspaces have equal dimension and every principal angle is below ``tol``."""
    if a.ambient_dim != b.ambient_dim:
        raise ValueError(
            f"ambient dimensions differ: {a.ambient_dim} vs {b.ambient_dim}"
        )
    if a.dim != b.dim:
        return False
    angles = principal_angles(a, b)
    return bool(angles.size == 0 or angles.max() < tol)


def max_principal_angle(a: Subspace, b: Subspace) -> float:
    angles = principal_angles(a, b)
    return float(angles.max()) if angles.size else 0.0


def is_psd(m, tol: float = 1e-10) -> bool:
    return bool(np.linalg.eigvalsh(as_sym(m)).min() >= -tol)


def psd_sqrt_inv(m) -> np.ndarray:
    """Symmetric inverse square root of a positive definite matrix."""
    w, v = np.linalg.eigh(as_sym(m))
    if w.min() <= 0:
        raise np.linalg.LinAlgError("matrix is not positive definite")
    return (v / np.sqrt(w)) @ v.T
