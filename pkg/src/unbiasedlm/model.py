"""Fixed designs, finite parameter grids and moment-constraint function sets."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .linalg import as_sym, is_psd, matrix_rank, sym_dim, sym_vec


@dataclass(frozen=True)
class DesignMatrix:
    """An ``n x k`` design with full column rank."""

    x: np.ndarray

    def __post_init__(self):
        x = np.array(self.x, dtype=float)
        if x.ndim == 1:
            x = x[:, None]
        if x.ndim != 2:
            raise ValueError("design must be a 2-d array")
        n, k = x.shape
        if k == 0 or k > n:
            raise ValueError(f"design needs 1 <= k <= n, got n={n}, k={k}")
        if matrix_rank(x) != k:
            raise ValueError("design does not have full column rank; beta is not identified")
        x.setflags(write=False)
        object.__setattr__(self, "x", x)

    @property
    def n(self) -> int:
        return self.x.shape[0]

    @property
    def k(self) -> int:
        return self.x.shape[1]

    @classmethod
    def coerce(cls, x) -> "DesignMatrix":
        return x if isinstance(x, cls) else cls(x)

    def mean(self, beta) -> np.ndarray:
        return self.x @ np.asarray(beta, dtype=float).reshape(self.k)


@dataclass(frozen=True)
class ModelFamily:
    """Union of model strata over a finite grid of coefficients and covariances.

    An empty ``covariances`` tuple means only the first moment is restricted.
    """

    design: DesignMatrix
    betas: tuple
    covariances: tuple = ()

    def __post_init__(self):
        design = DesignMatrix.coerce(self.design)
        betas = tuple(np.asarray(b, dtype=float).reshape(design.k) for b in self.betas)
        if not betas:
            raise ValueError("a model family needs at least one coefficient vector")
        covs = []
        for c in self.covariances:
            c = as_sym(c)
            if c.shape != (design.n, design.n):
                raise ValueError(f"covariance must be {design.n}x{design.n}, got {c.shape}")
            if not is_psd(c):
                raise ValueError("covariance is not positive semidefinite")
            covs.append(c)
        for arr in (*betas, *covs):
            arr.setflags(write=False)
        object.__setattr__(self, "design", design)
        object.__setattr__(self, "betas", betas)
        object.__setattr__(self, "covariances", tuple(covs))

    def members(self):
        """Yield ``(beta, covariance)`` pairs; covariance is ``None`` for first-moment families."""
        for b in self.betas:
            if self.covariances:
                for c in self.covariances:
                    yield b, c
            else:
                yield b, None

    def to_dict(self) -> dict:
        return {
            "x": self.design.x.tolist(),
            "betas": [b.tolist() for b in self.betas],
            "covariances": [c.tolist() for c in self.covariances],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ModelFamily":
        try:
            x = d["x"]
            betas = d["betas"]
        except KeyError as exc:
            raise ValueError(f"model family is missing field {exc}") from None
        return cls(DesignMatrix(x), tuple(betas), tuple(d.get("covariances", ())))


def load_family(path) -> ModelFamily:
    return ModelFamily.from_dict(json.loads(Path(path).read_text()))


@dataclass(frozen=True)
class Polynomial:
    """A polynomial on R^n of degree at most 4.

    ``constant + linear @ y + y @ quadratic @ y + sum(c * prod(y[idx]))`` where the
    explicit ``terms`` are ``(indices, coefficient)`` pairs, e.g. ``((0, 0, 1), 2.0)``
    for ``2 * y0**2 * y1``.
    """

    n: int
    constant: float = 0.0
    linear: np.ndarray | None = None
    quadratic: np.ndarray | None = None
    terms: tuple = field(default=())

    def __post_init__(self):
        terms = []
        for idx, coef in self.terms:
            idx = tuple(int(i) for i in idx)
            if len(idx) > 4:
                raise ValueError(f"monomial of degree {len(idx)} exceeds the supported degree 4")
            if any(i < 0 or i >= self.n for i in idx):
                raise ValueError(f"monomial index out of range for n={self.n}: {idx}")
            terms.append((idx, float(coef)))
        object.__setattr__(self, "terms", tuple(terms))
        if self.linear is not None:
            lin = np.asarray(self.linear, dtype=float).reshape(self.n)
            object.__setattr__(self, "linear", lin)
        if self.quadratic is not None:
            q = as_sym(self.quadratic)
            if q.shape != (self.n, self.n):
                raise ValueError("quadratic kernel has the wrong shape")
            object.__setattr__(self, "quadratic", q)

    @property
    def degree(self) -> int:
        deg = 0
        if self.linear is not None and np.any(self.linear):
            deg = 1
        if self.quadratic is not None and np.any(self.quadratic):
            deg = 2
        for idx, coef in self.terms:
            if coef != 0.0:
                deg = max(deg, len(idx))
        return deg

    def __call__(self, y) -> np.ndarray:
        """Evaluate at one point (shape ``(n,)``) or a stack of points (``(m, n)``)."""
        y = np.asarray(y, dtype=float)
        single = y.ndim == 1
        y = np.atleast_2d(y)
        out = np.full(y.shape[0], float(self.constant))
        if self.linear is not None:
            out = out + y @ self.linear
        if self.quadratic is not None:
            out = out + np.einsum("mi,ij,mj->m", y, self.quadratic, y)
        for idx, coef in self.terms:
            out = out + coef * np.prod(y[:, list(idx)], axis=1)
        return out[0] if single else out


@dataclass(frozen=True)
class MomentConstraintSet:
    """Zero-expectation conditions pinning the mean (and optionally covariance) of Y."""

    design: DesignMatrix
    beta: np.ndarray
    lam: np.ndarray | None = None

    def __post_init__(self):
        design = DesignMatrix.coerce(self.design)
        beta = np.asarray(self.beta, dtype=float).reshape(design.k)
        object.__setattr__(self, "design", design)
        object.__setattr__(self, "beta", beta)
        if self.lam is not None:
            lam = as_sym(self.lam)
            if lam.shape != (design.n, design.n):
                raise ValueError("lambda has the wrong shape")
            if not is_psd(lam):
                raise ValueError("lambda is not positive semidefinite")
            object.__setattr__(self, "lam", lam)

    @property
    def size(self) -> int:
        n = self.design.n
        return n + (sym_dim(n) if self.lam is not None else 0)


def constraint_functions(g: MomentConstraintSet) -> list[Polynomial]:
    """The functions whose expectations vanish on the constrained stratum.

    Linear functions ``y_i - x_i' beta`` come first, then (if a covariance is
    fixed) ``(y_i - mu_i)(y_l - mu_l) - lam_il`` for ``i <= l`` in row-major order.
    """
    n = g.design.n
    mu = g.design.mean(g.beta)
    eye = np.eye(n)
    funcs = [Polynomial(n, constant=-mu[i], linear=eye[i]) for i in range(n)]
    if g.lam is None:
        return funcs
    for i in range(n):
        for l in range(i, n):
            q = np.zeros((n, n))
            q[i, l] += 0.5
            q[l, i] += 0.5
            lin = -mu[l] * eye[i] - mu[i] * eye[l]
            funcs.append(
                Polynomial(n, constant=mu[i] * mu[l] - g.lam[i, l], linear=lin, quadratic=q)
            )
    return funcs


def spanning_check_betas(betas, order: int = 1) -> bool:
    """Whether the coefficient grid is rich enough for the representation results.

    ``order=1`` asks that the vectors span R^k; ``order=2`` that their outer
    products span the symmetric k x k matrices.
    """
    betas = [np.asarray(b, dtype=float).ravel() for b in betas]
    if not betas:
        raise ValueError("need at least one coefficient vector")
    k = betas[0].size
    if order == 1:
        return matrix_rank(np.stack(betas)) == k
    if order == 2:
        lifted = np.stack([sym_vec(np.outer(b, b)) for b in betas])
        return matrix_rank(lifted) == sym_dim(k)
    raise ValueError("order must be 1 or 2")
