"""Finitely supported distributions and witness constructions.

Every moment is an exact finite weighted sum over the atoms, taken in atom
order, so results are reproducible bit for bit.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .linalg import as_sym, sym_vec
from .model import DesignMatrix, ModelFamily, Polynomial

MERGE_TOL = 1e-12
WEIGHT_TOL = 1e-12


class WitnessError(ValueError):
    """A witness distribution with the requested moments could not be built."""


def _merge(atoms: np.ndarray, weights: np.ndarray):
    kept_atoms: list[np.ndarray] = []
    kept_weights: list[float] = []
    for a, w in zip(atoms, weights):
        if kept_atoms:
            dist = np.abs(np.asarray(kept_atoms) - a).max(axis=1)
            hit = np.flatnonzero(dist <= MERGE_TOL)
            if hit.size:
                kept_weights[hit[0]] += w
                continue
        kept_atoms.append(a)
        kept_weights.append(w)
    return np.asarray(kept_atoms), np.asarray(kept_weights)


@dataclass(frozen=True)
class DiscreteDistribution:
    """Probability weights on finitely many distinct points of R^n.

    Points closer than ``1e-12`` in max-norm are merged on construction (weights
    added, first occurrence kept).
    """

    atoms: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        atoms = np.array(self.atoms, dtype=float)
        if atoms.ndim == 1:
            atoms = atoms[:, None]
        weights = np.array(self.weights, dtype=float).ravel()
        if atoms.ndim != 2 or atoms.shape[0] != weights.size:
            raise ValueError("need one weight per atom")
        if atoms.shape[0] == 0:
            raise ValueError("a distribution needs at least one atom")
        if np.any(weights < 0):
            raise ValueError("weights must be nonnegative")
        if abs(weights.sum() - 1.0) > WEIGHT_TOL:
            raise ValueError(f"weights sum to {weights.sum()!r}, not 1")
        atoms, weights = _merge(atoms, weights)
        atoms.setflags(write=False)
        weights.setflags(write=False)
        object.__setattr__(self, "atoms", atoms)
        object.__setattr__(self, "weights", weights)

    @property
    def n(self) -> int:
        return self.atoms.shape[1]

    @property
    def size(self) -> int:
        return self.atoms.shape[0]

    @classmethod
    def point_mass(cls, y) -> "DiscreteDistribution":
        return cls(np.atleast_2d(np.asarray(y, dtype=float)), [1.0])

    @classmethod
    def uniform(cls, atoms) -> "DiscreteDistribution":
        atoms = np.atleast_2d(np.asarray(atoms, dtype=float))
        return cls(atoms, np.full(atoms.shape[0], 1.0 / atoms.shape[0]))

    def support_contains(self, points, tol: float = 1e-9) -> bool:
        """Whether every point carries positive mass here (absolute continuity check)."""
        pos = self.atoms[self.weights > 0]
        for p in np.atleast_2d(points):
            if not np.any(np.abs(pos - p).max(axis=1) <= tol):
                return False
        return True

    def to_dict(self) -> dict:
        return {"atoms": self.atoms.tolist(), "weights": self.weights.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "DiscreteDistribution":
        try:
            return cls(d["atoms"], d["weights"])
        except KeyError as exc:
            raise ValueError(f"distribution is missing field {exc}") from None


def mixture(components, coefs) -> DiscreteDistribution:
    atoms = np.concatenate([c.atoms for c in components])
    weights = np.concatenate([w * c.weights for c, w in zip(components, coefs)])
    return DiscreteDistribution(atoms, weights)


def product(marginals) -> DiscreteDistribution:
    """Joint law of independent coordinates with the given 1-d marginals."""
    atoms = np.zeros((1, 0))
    weights = np.ones(1)
    for m in marginals:
        if m.n != 1:
            raise ValueError("marginals must be one-dimensional")
        atoms = np.array([np.append(a, b) for a in atoms for b in m.atoms[:, 0]])
        weights = np.array([wa * wb for wa in weights for wb in m.weights])
    return DiscreteDistribution(atoms, weights)


def skewed_two_point() -> DiscreteDistribution:
    """Mean 0, variance 1, third moment 1/sqrt(2): -1/sqrt(2) w.p. 2/3, sqrt(2) w.p. 1/3."""
    return DiscreteDistribution([[-1.0 / np.sqrt(2.0)], [np.sqrt(2.0)]], [2.0 / 3.0, 1.0 / 3.0])


def rademacher() -> DiscreteDistribution:
    return DiscreteDistribution([[-1.0], [1.0]], [0.5, 0.5])


def shift(f: DiscreteDistribution, loc) -> DiscreteDistribution:
    return DiscreteDistribution(f.atoms + np.asarray(loc, dtype=float), f.weights)


def moment1(f: DiscreteDistribution) -> np.ndarray:
    return f.weights @ f.atoms


def moment2_central(f: DiscreteDistribution) -> np.ndarray:
    c = f.atoms - moment1(f)
    return as_sym((c * f.weights[:, None]).T @ c)


def moment3_central(f: DiscreteDistribution) -> np.ndarray:
    """Third central moment tensor ``E[e_a e_b e_c]``."""
    c = f.atoms - moment1(f)
    return np.einsum("m,ma,mb,mc->abc", f.weights, c, c, c)


def expect_poly(f: DiscreteDistribution, p: Polynomial) -> float:
    if p.n != f.n:
        raise ValueError(f"polynomial on R^{p.n} but distribution on R^{f.n}")
    if p.degree > 4:
        raise ValueError("only polynomials up to degree 4 are supported")
    return float(f.weights @ p(f.atoms))


def make_witness_mean(design, beta):
    """Discrete laws with mean 0 and with mean ``X beta``.

    Returns ``(f0, f1)`` with ``f0 = (1/4n) sum_i (d[e_i] + d[-e_i] + d[2Xb - e_i] + d[e_i - 2Xb])``
    and ``f1 = (1/2n) sum_i (d[e_i] + d[2Xb - e_i])``.
    """
    design = DesignMatrix.coerce(design)
    n = design.n
    mu2 = 2.0 * design.mean(beta)
    eye = np.eye(n)
    f0 = DiscreteDistribution(
        np.concatenate([eye, -eye, mu2 - eye, eye - mu2]), np.full(4 * n, 1.0 / (4 * n))
    )
    f1 = DiscreteDistribution(np.concatenate([eye, mu2 - eye]), np.full(2 * n, 1.0 / (2 * n)))
    return f0, f1


def canonical_span_set(n: int) -> np.ndarray:
    """Points ``e_i`` and ``e_i + e_j`` (i <= j) whose lifts ``(z, sym_vec(z z'))`` are a basis."""
    if n < 1:
        raise ValueError("n must be positive")
    eye = np.eye(n)
    pairs = [eye[i] + eye[j] for i in range(n) for j in range(i, n)]
    return np.concatenate([eye, np.asarray(pairs)])


def lift(points) -> np.ndarray:
    """Rows ``(z, sym_vec(z z'))`` for each point ``z``."""
    points = np.atleast_2d(np.asarray(points, dtype=float))
    return np.stack([np.concatenate([z, sym_vec(np.outer(z, z))]) for z in points])


def _symmetric_base(center: np.ndarray, points: np.ndarray) -> DiscreteDistribution:
    # uniform on {z} and their reflections 2*center - z; mean is `center`
    return DiscreteDistribution.uniform(np.concatenate([points, 2.0 * center - points]))


def _fill_covariance(base: DiscreteDistribution, center: np.ndarray, lam: np.ndarray,
                     max_halvings: int = 40) -> DiscreteDistribution:
    """Mix ``base`` (mean ``center``) with symmetric pairs so the covariance becomes ``lam``."""
    n = lam.shape[0]
    lam_eigs = np.linalg.eigvalsh(lam)
    if lam_eigs.min() <= 1e-10:
        raise WitnessError("target covariance is not positive definite")
    base_cov = moment2_central(base)
    top = np.linalg.eigvalsh(base_cov).max()
    c = 0.5 if top <= 0 else min(0.5, 0.5 * lam_eigs.min() / top)
    for _ in range(max_halvings + 1):
        resid = as_sym(lam - c * base_cov)
        w, v = np.linalg.eigh(resid)
        if w.min() >= -1e-12:
            break
        c /= 2.0
    else:
        raise WitnessError("residual covariance stayed indefinite after 40 halvings")
    w = np.clip(w, 0.0, None)
    dirs = (v * np.sqrt(n * w / (1.0 - c))).T
    pairs = DiscreteDistribution(
        np.concatenate([center + dirs, center - dirs]), np.full(2 * n, 1.0 / (2 * n))
    )
    return mixture([base, pairs], [c, 1.0 - c])


def make_witness_mean_cov(design, beta, lam, base: str = "axes") -> DiscreteDistribution:
    """A discrete law with mean ``X beta`` and covariance ``lam`` (positive definite).

    ``base="axes"`` starts from the uniform law on ``X beta +- e_i``;
    ``base="span"`` starts from the canonical span set and its reflections
    through ``X beta``, which gives a richer support.
    """
    design = DesignMatrix.coerce(design)
    lam = as_sym(lam)
    if lam.shape != (design.n, design.n):
        raise ValueError(f"lambda must be {design.n}x{design.n}")
    mu = design.mean(beta)
    if base == "axes":
        eye = np.eye(design.n)
        base_dist = DiscreteDistribution.uniform(np.concatenate([mu + eye, mu - eye]))
    elif base == "span":
        base_dist = _symmetric_base(mu, canonical_span_set(design.n))
    else:
        raise ValueError(f"unknown base {base!r}")
    return _fill_covariance(base_dist, mu, lam)


def member_witness(family: ModelFamily, beta, lam=None) -> DiscreteDistribution:
    """The discrete law used for one family member inside :func:`make_composite_witness`."""
    if lam is None:
        return make_witness_mean(family.design, beta)[1]
    return make_witness_mean_cov(family.design, beta, lam, base="span")


def make_composite_witness(family: ModelFamily, y) -> DiscreteDistribution:
    """One law in the family whose support holds ``y`` and every member witness.

    The mean is ``X beta*`` for the first grid coefficient and, for families with
    covariances, the covariance is the first grid covariance.
    """
    design = family.design
    y = np.asarray(y, dtype=float).reshape(design.n)
    beta_star = family.betas[0]
    mu_star = design.mean(beta_star)
    ends = DiscreteDistribution(np.stack([y, 4.0 * mu_star - y]), [0.5, 0.5])
    if not family.covariances:
        zero_mean = [make_witness_mean(design, b)[0] for b in family.betas]
        pool = mixture(zero_mean, [1.0 / len(zero_mean)] * len(zero_mean))
        return mixture([ends, pool], [0.5, 0.5])

    members = []
    for b in family.betas:
        for sign in (1.0, -1.0):
            for lam in family.covariances:
                members.append(member_witness(family, sign * b, lam))
    pool = mixture(members, [1.0 / len(members)] * len(members))
    f0y = mixture([ends, pool], [0.5, 0.5])
    return _fill_covariance(f0y, mu_star, family.covariances[0])


def skewed_pair(design, beta, a: int, b: int, lam) -> DiscreteDistribution:
    """Mean ``X beta``, covariance ``lam``, and ``E[e_a^2 e_b] != 0``.

    A skewed two-point error along ``(e_a + e_b)/sqrt(2)`` is mixed with symmetric
    pairs that top the covariance up to ``lam``.
    """
    design = DesignMatrix.coerce(design)
    n = design.n
    if a == b or not (0 <= a < n and 0 <= b < n):
        raise ValueError("need two distinct coordinates")
    lam = as_sym(lam)
    mu = design.mean(beta)
    v = np.zeros(n)
    v[[a, b]] = 1.0 / np.sqrt(2.0)
    s = skewed_two_point()
    base = DiscreteDistribution(mu + s.atoms * v, s.weights)
    return _fill_covariance(base, mu, lam)


def load_distribution(path) -> DiscreteDistribution:
    return DiscreteDistribution.from_dict(json.loads(Path(path).read_text()))

