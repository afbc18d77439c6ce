"""Linear and linear-plus-quadratic (LPQ) estimators of the coefficient vector."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .dist import DiscreteDistribution
from .linalg import RANK_TOL, as_sym, matrix_rank, pseudo_inverse
from .model import DesignMatrix

PSD_TOL = 1e-9


class IdentificationError(ValueError):
    """The weighting matrix leaves the coefficients unidentified."""


@dataclass(frozen=True)
class LPQEstimator:
    """``u(y) = A'y + (y'B_1 y, ..., y'B_k y)'``.

    ``a`` is ``n x k``; ``kernels`` is a ``(k, n, n)`` stack of symmetric matrices.
    A purely linear estimator has all-zero kernels.
    """

    a: np.ndarray
    kernels: np.ndarray | None = None

    def __post_init__(self):
        a = np.array(self.a, dtype=float)
        if a.ndim == 1:
            a = a[:, None]
        n, k = a.shape
        if self.kernels is None:
            kernels = np.zeros((k, n, n))
        else:
            kernels = np.array(self.kernels, dtype=float)
            if kernels.shape != (k, n, n):
                raise ValueError(f"expected kernels of shape {(k, n, n)}, got {kernels.shape}")
            kernels = np.stack([as_sym(b) for b in kernels])
        a.setflags(write=False)
        kernels.setflags(write=False)
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "kernels", kernels)

    @property
    def n(self) -> int:
        return self.a.shape[0]

    @property
    def k(self) -> int:
        return self.a.shape[1]

    @property
    def is_linear(self) -> bool:
        return not np.any(self.kernels)

    def __call__(self, y) -> np.ndarray:
        return evaluate(self, y)

    def __add__(self, other: "LPQEstimator") -> "LPQEstimator":
        return LPQEstimator(self.a + other.a, self.kernels + other.kernels)

    def scaled(self, t: float) -> "LPQEstimator":
        return LPQEstimator(t * self.a, t * self.kernels)

    def to_dict(self) -> dict:
        return {"a": self.a.tolist(), "kernels": self.kernels.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "LPQEstimator":
        if "a" not in d:
            raise ValueError("estimator is missing field 'a'")
        kernels = d.get("kernels")
        if kernels is not None and len(kernels) == 0:
            kernels = None
        return cls(d["a"], kernels)


# A linear estimator is an LPQ estimator whose kernels vanish.
LinearEstimator = LPQEstimator


def load_estimator(path) -> LPQEstimator:
    return LPQEstimator.from_dict(json.loads(Path(path).read_text()))


def ols(design) -> LPQEstimator:
    x = DesignMatrix.coerce(design).x
    return LPQEstimator(pseudo_inverse(x).T)


def gls(design, sigma) -> LPQEstimator:
    """Generalized least squares ``(X' S^- X)^- X' S^- y`` with Moore-Penrose inverses.

    Computed as ``pinv(W X) W`` with ``W' W = S^-``, which keeps the conditioning
    at that of ``X`` rather than squaring it.
    """
    x = DesignMatrix.coerce(design).x
    sigma = as_sym(sigma)
    if sigma.shape != (x.shape[0], x.shape[0]):
        raise ValueError("sigma does not match the design")
    w, v = np.linalg.eigh(sigma)
    keep = w > RANK_TOL * max(float(np.abs(w).max()), np.finfo(float).tiny)
    root = (v[:, keep] / np.sqrt(w[keep])).T
    wx = root @ x
    if matrix_rank(wx) < x.shape[1]:
        raise IdentificationError("X' sigma^- X is singular; beta is not identified")
    return LPQEstimator((pseudo_inverse(wx) @ root).T)


def evaluate(u: LPQEstimator, y) -> np.ndarray:
    """Value of ``u`` at one response vector ``(n,)`` or at each row of ``(m, n)``."""
    y = np.asarray(y, dtype=float)
    if y.shape[-1] != u.n:
        raise ValueError(f"estimator expects vectors of length {u.n}, got {y.shape[-1]}")
    if y.ndim == 1:
        return u.a.T @ y + np.einsum("i,jil,l->j", y, u.kernels, y)
    return y @ u.a + np.einsum("mi,jil,ml->mj", y, u.kernels, y)


def expectation_closed_form(u: LPQEstimator, design, beta, lam) -> np.ndarray:
    """Mean of ``u(Y)`` for any law with mean ``X beta`` and covariance ``lam``."""
    x = DesignMatrix.coerce(design).x
    mu = x @ np.asarray(beta, dtype=float).reshape(x.shape[1])
    lam = as_sym(lam)
    quad = np.einsum("i,jil,l->j", mu, u.kernels, mu) + np.einsum("jil,li->j", u.kernels, lam)
    return u.a.T @ mu + quad


def expectation(u: LPQEstimator, f: DiscreteDistribution) -> np.ndarray:
    return f.weights @ evaluate(u, f.atoms)


def variance_under(u: LPQEstimator, f: DiscreteDistribution) -> np.ndarray:
    """Exact ``k x k`` covariance of ``u(Y)`` from centered atom sums."""
    if f.n != u.n:
        raise ValueError(f"estimator on R^{u.n} but distribution on R^{f.n}")
    vals = evaluate(u, f.atoms)
    c = vals - f.weights @ vals
    return as_sym((c * f.weights[:, None]).T @ c)


def psd_leq(small, large, tol: float = PSD_TOL) -> bool:
    """``small <= large`` in the positive semidefinite order, up to ``tol``."""
    return bool(np.linalg.eigvalsh(as_sym(np.asarray(large) - np.asarray(small))).min() >= -tol)
