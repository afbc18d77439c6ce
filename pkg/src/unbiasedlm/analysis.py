"""Verification and optimization over finitely supported models.

Representation checks work on a finite atom set: a function on the atoms is a
vector in R^m, a law on the atoms is a weight vector, and "unbiased for zero
under every admissible law" means orthogonal to every admissible weight vector.
"""

from __future__ import annotations

import csv
import io
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy.optimize import linprog

from .dist import DiscreteDistribution, moment1, moment2_central, moment3_central
from .estimator import LPQEstimator, evaluate, gls, variance_under
from .koopmann import (
    KoopmannConstraints,
    combine,
    gram_rows,
    parameterize_member,
    whitener,
)
from .linalg import (
    Subspace,
    as_sym,
    column_space,
    max_principal_angle,
    null_space,
    orthogonal_complement,
    pseudo_inverse,
    subspace_equal,
    sym_vec,
)
from .model import DesignMatrix, ModelFamily, MomentConstraintSet, constraint_functions

SUBSPACE_TOL = 1e-8
FEASIBILITY_TOL = 1e-9
SUPPORT_TOL = 1e-9


class InfeasibleWitnessError(ValueError):
    """No admissible law (or not the supplied one) satisfies the moment conditions."""


class MomentMismatchError(ValueError):
    """A distribution's moments disagree with the stated design and covariance shape."""


# ---------------------------------------------------------------------------
# representation oracles


def _evaluation_matrix(atoms, funcs) -> np.ndarray:
    if not funcs:
        return np.zeros((0, atoms.shape[0]))
    return np.stack([g(atoms) for g in funcs])


def _align_weights(atoms: np.ndarray, f: DiscreteDistribution) -> np.ndarray:
    if f.n != atoms.shape[1]:
        raise InfeasibleWitnessError("witness lives in a different dimension than the atoms")
    w = np.zeros(atoms.shape[0])
    used = np.zeros(f.size, dtype=bool)
    for i, a in enumerate(atoms):
        hit = np.flatnonzero(np.abs(f.atoms - a).max(axis=1) <= 1e-12)
        if hit.size == 0:
            raise InfeasibleWitnessError(f"witness puts no mass on atom {a.tolist()}")
        w[i] = f.weights[hit[0]]
        used[hit[0]] = True
    if not used.all():
        raise InfeasibleWitnessError("witness has mass outside the given atoms")
    return w


def _zero_unbiased(constraints: np.ndarray, w0: np.ndarray, support: np.ndarray) -> Subspace:
    """Orthogonal complement of the linear span of the admissible weight vectors.

    The admissible set is ``{w >= 0, constraints @ w = (1, 0, ...)}``; ``w0`` is a
    point of it that is positive exactly on ``support`` (a relative-interior point).
    """
    return orthogonal_complement(_weight_span(constraints, w0, support))


def _weight_span(constraints: np.ndarray, w0: np.ndarray, support: np.ndarray) -> Subspace:
    m = w0.size
    idx = np.flatnonzero(support)
    moves = null_space(constraints[:, idx]).basis
    embedded = np.zeros((m, moves.shape[1]))
    embedded[idx] = moves
    return column_space(np.column_stack([w0, embedded]))


@dataclass(frozen=True)
class RepresentationReport:
    ambient_atoms: np.ndarray
    span_g: Subspace
    unbiased_zero: Subspace
    equal: bool
    max_principal_angle: float


def representation_oracle(atoms, g: MomentConstraintSet | None,
                          strict_positive_witness: DiscreteDistribution,
                          tol: float = SUBSPACE_TOL) -> RepresentationReport:
    """Compare zero-unbiased functions on ``atoms`` with the span of the constraint functions.

    The witness must put positive mass on every atom and satisfy all the moment
    conditions; laws dominated by it form the model. ``g=None`` means no
    conditions at all.
    """
    atoms = np.atleast_2d(np.asarray(atoms, dtype=float))
    w = _align_weights(atoms, strict_positive_witness)
    if np.any(w <= 0):
        raise InfeasibleWitnessError("witness has zero weight on some atom")
    funcs = constraint_functions(g) if g is not None else []
    vals = _evaluation_matrix(atoms, funcs)
    if vals.size and np.abs(vals @ w).max() > FEASIBILITY_TOL * max(1.0, np.abs(vals).max()):
        raise InfeasibleWitnessError("witness violates a moment condition")
    constraints = np.vstack([np.ones((1, atoms.shape[0])), vals])
    u0 = _zero_unbiased(constraints, w, np.ones(atoms.shape[0], dtype=bool))
    span_g = column_space(vals.T) if vals.size else Subspace(np.zeros((atoms.shape[0], 0)))
    return RepresentationReport(
        ambient_atoms=atoms,
        span_g=span_g,
        unbiased_zero=u0,
        equal=subspace_equal(u0, span_g, tol),
        max_principal_angle=max_principal_angle(u0, span_g) if u0.dim == span_g.dim else np.pi / 2,
    )


def relative_interior_point(constraints: np.ndarray, rhs: np.ndarray):
    """A point of ``{w >= 0, constraints @ w = rhs}`` with maximal support.

    Returns ``(w, support_mask)`` or ``None`` if the set is empty. Each LP
    maximizes the mass on atoms not yet seen positive; when that optimum is 0
    the remaining atoms are forced to zero.
    """
    m = constraints.shape[1]
    found = np.zeros(m, dtype=bool)
    points = []
    while True:
        cost = -(~found).astype(float)
        res = linprog(cost, A_eq=constraints, b_eq=rhs, bounds=(0, None), method="highs")
        if res.status == 2:
            return None
        if res.status != 0:
            raise RuntimeError(f"linear program failed: {res.message}")
        new = (res.x > SUPPORT_TOL) & ~found
        if not points or new.any():
            points.append(res.x)
            found |= res.x > SUPPORT_TOL
        if not new.any() or found.all():
            break
    w = np.mean(points, axis=0)
    w[~found] = 0.0
    idx = np.flatnonzero(found)
    # project back onto the affine constraints; the LP solution is only feasible to ~1e-9
    sub = constraints[:, idx]
    w[idx] -= pseudo_inverse(sub) @ (sub @ w[idx] - rhs)
    if np.any(w[idx] <= 0):
        raise RuntimeError("lost positivity while polishing an interior point")
    return w, found


def interior_witness(atoms, g: MomentConstraintSet) -> DiscreteDistribution:
    """A law on ``atoms`` meeting the conditions of ``g`` with every atom charged."""
    atoms = np.atleast_2d(np.asarray(atoms, dtype=float))
    vals = _evaluation_matrix(atoms, constraint_functions(g))
    constraints = np.vstack([np.ones((1, atoms.shape[0])), vals])
    rhs = np.zeros(constraints.shape[0])
    rhs[0] = 1.0
    found = relative_interior_point(constraints, rhs)
    if found is None:
        raise InfeasibleWitnessError("no law on these atoms meets the moment conditions")
    w, support = found
    if not support.all():
        raise InfeasibleWitnessError("every admissible law leaves some atom uncharged")
    return DiscreteDistribution(atoms, w / w.sum())


@dataclass(frozen=True)
class FamilyReport:
    """Zero-unbiased functions of a whole model family on a finite atom set.

    ``predicted`` holds every polynomial of degree <= 2 (degree <= 1 without a
    fixed covariance) whose closed-form mean vanishes on each member, evaluated
    on the atoms. ``closed_form`` is the narrower class ``a'y + y'By`` with
    ``X'a = 0``, ``X'BX = 0`` and ``tr(B lam) = 0`` for each grid covariance;
    the two agree once the grid separates the constant from the trace terms.
    """

    atoms: np.ndarray
    unbiased_zero: Subspace
    predicted: Subspace
    closed_form: Subspace
    kind: str
    equal: bool
    matches_closed_form: bool
    max_principal_angle: float
    quadratic_dim: int

    def summary(self) -> str:
        label = {
            "linear": "linear representation confirmed",
            "lpq": "LPQ representation confirmed",
            "collapsed": "collapsed to linear",
        }[self.kind]
        status = label if self.equal else f"representation mismatch ({self.kind})"
        return (
            f"{status}\n"
            f"atoms: {self.atoms.shape[0]}\n"
            f"dim unbiased_zero: {self.unbiased_zero.dim}\n"
            f"dim predicted: {self.predicted.dim}\n"
            f"quadratic directions: {self.quadratic_dim}\n"
            f"matches closed form: {str(self.matches_closed_form).lower()}\n"
            f"max principal angle: {self.max_principal_angle!r}\n"
        )


def _lift_rows(points: np.ndarray, quadratic: bool) -> np.ndarray:
    rows = [np.ones((points.shape[0], 1)), points]
    if quadratic:
        rows.append(np.stack([sym_vec(np.outer(z, z)) for z in points]))
    return np.hstack(rows)


def family_representation(family: ModelFamily, atoms, tol: float = SUBSPACE_TOL) -> FamilyReport:
    """Zero-unbiased functions of ``family`` among laws dominated by a law on ``atoms``.

    The dominating law is a maximal-support member for the first grid point; atoms
    it cannot charge are dropped. Every other member must admit some law on the
    remaining atoms, otherwise :class:`InfeasibleWitnessError` is raised.
    """
    design = family.design
    atoms = np.atleast_2d(np.asarray(atoms, dtype=float))
    if atoms.shape[1] != design.n:
        raise ValueError("atoms do not match the design dimension")
    members = list(family.members())

    def system(pts, beta, lam):
        vals = _evaluation_matrix(pts, constraint_functions(MomentConstraintSet(design, beta, lam)))
        cons = np.vstack([np.ones((1, pts.shape[0])), vals])
        rhs = np.zeros(cons.shape[0])
        rhs[0] = 1.0
        return cons, rhs

    first = relative_interior_point(*system(atoms, *members[0]))
    if first is None:
        raise InfeasibleWitnessError("the first family member has no law on these atoms")
    atoms = atoms[first[1]]

    spans = []
    for beta, lam in members:
        cons, rhs = system(atoms, beta, lam)
        found = relative_interior_point(cons, rhs)
        if found is None:
            raise InfeasibleWitnessError(
                f"member beta={beta.tolist()} has no law dominated by the reference law"
            )
        spans.append(_weight_span(cons, *found).basis)
    u0 = orthogonal_complement(column_space(np.hstack(spans)))

    quadratic = bool(family.covariances)
    n, k = design.n, design.k
    lifted = _lift_rows(atoms, quadratic)
    p = lifted.shape[1]

    mean_rows = []
    for beta, lam in members:
        mu = design.mean(beta)
        row = [np.ones(1), mu]
        if quadratic:
            row.append(sym_vec(np.outer(mu, mu) + lam))
        mean_rows.append(np.concatenate(row))
    params = null_space(np.stack(mean_rows)).basis
    predicted = column_space(lifted @ params)
    quad_dim = 0
    if quadratic:
        quad_dim = int(np.linalg.matrix_rank(params[1 + n:], tol=1e-9)) if params.size else 0

    cons = [np.eye(1, p, 0)]
    a_block = np.zeros((k, p))
    a_block[:, 1:1 + n] = design.x.T
    cons.append(a_block)
    if quadratic:
        kernel = np.vstack([gram_rows(design.x)] + [sym_vec(c)[None, :] for c in family.covariances])
        kb = np.zeros((kernel.shape[0], p))
        kb[:, 1 + n:] = kernel
        cons.append(kb)
    closed = column_space(lifted @ null_space(np.vstack(cons)).basis)

    if not quadratic:
        kind = "linear"
    elif quad_dim > 0:
        kind = "lpq"
    else:
        kind = "collapsed"
    same_dim = u0.dim == predicted.dim
    return FamilyReport(
        atoms=atoms,
        unbiased_zero=u0,
        predicted=predicted,
        closed_form=closed,
        kind=kind,
        equal=subspace_equal(u0, predicted, tol),
        matches_closed_form=subspace_equal(u0, closed, tol),
        max_principal_angle=max_principal_angle(u0, predicted) if same_dim else float(np.pi / 2),
        quadratic_dim=quad_dim,
    )


def grid_atoms(values, n: int) -> np.ndarray:
    """Cartesian power ``values^n`` in lexicographic order."""
    values = np.asarray(values, dtype=float)
    mesh = np.meshgrid(*([values] * n), indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=1)


# ---------------------------------------------------------------------------
# moment checks


def _check_moments(f: DiscreteDistribution, design: DesignMatrix, sigma: np.ndarray,
                   tol: float = 1e-9):
    """Return ``(beta, sigma2)`` with mean ``X beta`` and covariance ``sigma2 * sigma``."""
    if f.n != design.n:
        raise MomentMismatchError(f"distribution on R^{f.n}, design has n={design.n}")
    mu = moment1(f)
    x = design.x
    beta = np.linalg.lstsq(x, mu, rcond=None)[0]
    if np.abs(x @ beta - mu).max() > tol * max(1.0, np.abs(mu).max()):
        raise MomentMismatchError("the mean is not in the column space of X")
    lam = moment2_central(f)
    sigma = as_sym(sigma)
    sigma2 = np.trace(lam) / np.trace(sigma) if np.trace(sigma) else 0.0
    scale = max(1.0, np.abs(lam).max())
    if np.abs(lam - sigma2 * sigma).max() > tol * scale:
        raise MomentMismatchError("the covariance is not proportional to sigma")
    return beta, sigma2


# ---------------------------------------------------------------------------
# minimum-variance search


def min_variance_member(c: KoopmannConstraints, f: DiscreteDistribution, direction,
                        rcond: float = 1e-12):
    """Member of the class minimizing ``Var_f(direction' u(Y))``.

    The variance is a convex quadratic in the coordinates of the affine
    parameterization; its normal equations are solved with a minimum-norm
    pseudo-inverse. Returns ``(estimator, variance)``.
    """
    direction = np.asarray(direction, dtype=float).reshape(c.k)
    if not np.any(direction):
        raise ValueError("direction must be nonzero")
    _check_moments(f, c.design, c.sigma)
    base, dirs = parameterize_member(c)
    w = f.weights
    s0 = evaluate(base, f.atoms) @ direction
    s0c = s0 - w @ s0
    base_var = float(w @ s0c**2)
    if not dirs:
        return base, base_var
    s = np.column_stack([evaluate(d, f.atoms) @ direction for d in dirs])
    sc = s - w @ s
    gram = (sc * w[:, None]).T @ sc
    cross = (sc * w[:, None]).T @ s0c
    coefs = -pseudo_inverse(gram, tol=rcond) @ cross
    best = combine(base, dirs, coefs)
    v = evaluate(best, f.atoms) @ direction
    vc = v - w @ v
    var = float(w @ vc**2)
    if var > base_var:
        return base, base_var
    return best, var


# ---------------------------------------------------------------------------
# orthogonality certificate


@dataclass(frozen=True)
class BueCertificate:
    """``Cov(GLS, u - GLS)`` split into its linear, mean-shift and third-moment parts."""

    cross_cov: np.ndarray
    term1: np.ndarray
    term2: np.ndarray
    term3: np.ndarray
    passed: bool

    @property
    def decomposition_error(self) -> float:
        return float(np.abs(self.cross_cov - self.term1 - self.term2 - self.term3).max())


def bue_certificate(u: LPQEstimator, design, f: DiscreteDistribution, sigma,
                    tol: float = 1e-10) -> BueCertificate:
    design = DesignMatrix.coerce(design)
    sigma = as_sym(sigma)
    _check_moments(f, design, sigma)
    mu = moment1(f)
    g = gls(design, sigma).a
    w = f.weights
    eps = f.atoms - mu
    ge = eps @ g                                   # rows: G' eps
    lin = eps @ (u.a - g)                          # rows: (A - G)' eps
    shift = 2.0 * np.einsum("jil,l,mi->mj", u.kernels, mu, eps)
    quad = np.einsum("mi,jil,ml->mj", eps, u.kernels, eps)
    term1 = (ge * w[:, None]).T @ lin
    term2 = (ge * w[:, None]).T @ shift
    term3 = (ge * w[:, None]).T @ quad

    diff = evaluate(u, f.atoms) - f.atoms @ g
    diff_c = diff - w @ diff
    gls_c = f.atoms @ g - w @ (f.atoms @ g)
    cross = (gls_c * w[:, None]).T @ diff_c
    worst = max(np.abs(m).max() for m in (cross, term1, term2, term3))
    return BueCertificate(cross, term1, term2, term3, bool(worst < tol))


def whitened_third_moments(f: DiscreteDistribution, sigma) -> np.ndarray:
    w = whitener(sigma)
    centered = DiscreteDistribution(f.atoms @ w.T, f.weights)
    return moment3_central(centered)


def check_g3(f: DiscreteDistribution, design, sigma, tol: float = 1e-10) -> bool:
    """Whether every whitened mixed third central moment vanishes."""
    design = DesignMatrix.coerce(design)
    mu = moment1(f)
    x = design.x
    beta = np.linalg.lstsq(x, mu, rcond=None)[0]
    if np.abs(x @ beta - mu).max() > 1e-9 * max(1.0, np.abs(mu).max()):
        raise MomentMismatchError("the mean is not in the column space of X")
    try:
        t = whitened_third_moments(f, sigma)
    except np.linalg.LinAlgError as exc:
        raise ValueError(str(exc)) from None
    n = t.shape[0]
    mixed = np.ones_like(t, dtype=bool)
    mixed[np.arange(n), np.arange(n), np.arange(n)] = False
    return bool(np.abs(t[mixed]).max(initial=0.0) < tol)


# ---------------------------------------------------------------------------
# variance tables


@dataclass(frozen=True)
class TableRow:
    estimator: str
    distribution: str
    coordinate: int
    variance: float | None


def _cell(name_u, name_f):
    (ename, u), (dname, f) = name_u, name_f
    try:
        v = variance_under(u, f)
    except ValueError:
        return [TableRow(ename, dname, j, None) for j in range(u.k)]
    return [TableRow(ename, dname, j, float(v[j, j])) for j in range(u.k)]


def variance_comparison_table(estimators, fs, n_jobs: int = 1) -> list[TableRow]:
    """Exact per-coordinate variances for every (estimator, distribution) pair.

    Cells with mismatched dimensions get ``variance=None``. Rows come out in
    estimator-major order no matter how many workers evaluate the cells.
    """
    cells = [(eu, ef) for eu in estimators.items() for ef in fs.items()]
    if n_jobs > 1:
        with ThreadPoolExecutor(max_workers=n_jobs) as pool:
            results = list(pool.map(lambda c: _cell(*c), cells))
    else:
        results = [_cell(*c) for c in cells]
    return [row for rows in results for row in rows]


TABLE_HEADER = ("estimator", "distribution", "coordinate", "variance")


def _fmt(v: float | None) -> str:
    return "invalid" if v is None else format(v, ".17g")


def table_to_csv(rows) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\r\n")
    writer.writerow(TABLE_HEADER)
    for r in rows:
        writer.writerow([r.estimator, r.distribution, r.coordinate, _fmt(r.variance)])
    return buf.getvalue()


def table_to_json(rows) -> str:
    payload = [
        {"estimator": r.estimator, "distribution": r.distribution,
         "coordinate": r.coordinate, "variance": r.variance}
        for r in rows
    ]
    return json.dumps(payload, indent=2) + "\n"


__all__ = [
    "BueCertificate",
    "FamilyReport",
    "InfeasibleWitnessError",
    "MomentMismatchError",
    "RepresentationReport",
    "TableRow",
    "bue_certificate",
    "check_g3",
    "family_representation",
    "grid_atoms",
    "interior_witness",
    "min_variance_member",
    "relative_interior_point",
    "representation_oracle",
    "table_to_csv",
    "table_to_json",
    "variance_comparison_table",
    "whitened_third_moments",
]
