import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from unbiasedlm.analysis import (
    InfeasibleWitnessError,
    MomentMismatchError,
    bue_certificate,
    check_g3,
    family_representation,
    grid_atoms,
    interior_witness,
    min_variance_member,
    relative_interior_point,
    representation_oracle,
    table_to_csv,
    table_to_json,
    variance_comparison_table,
    whitened_third_moments,
)
from unbiasedlm.dist import (
    DiscreteDistribution,
    canonical_span_set,
    expect_poly,
    make_witness_mean_cov,
    moment2_central,
    product,
    rademacher,
    shift,
    skewed_pair,
    skewed_two_point,
)
from unbiasedlm.estimator import LPQEstimator, gls, ols, variance_under
from unbiasedlm.koopmann import build_constraints, construct_quadratic_null, make_ub_estimator
from unbiasedlm.model import DesignMatrix, ModelFamily, MomentConstraintSet, Polynomial

from conftest import random_design, random_pd
from oracles import brute_force_min_variance

# --------------------------------------------------------------------------- oracle


def test_two_atom_oracle():
    atoms = [[1.0], [-1.0]]
    g = MomentConstraintSet(DesignMatrix([[1.0]]), [0.0])
    rep = representation_oracle(atoms, g, DiscreteDistribution(atoms, [0.5, 0.5]))
    assert rep.equal
    assert rep.span_g.dim == rep.unbiased_zero.dim == 1
    assert abs(abs(rep.span_g.basis[0, 0]) - np.sqrt(0.5)) < 1e-15
    assert abs(rep.span_g.basis[0, 0] + rep.span_g.basis[1, 0]) < 1e-15


def test_no_constraints_only_zero_is_unbiased():
    atoms = [[1.0], [-1.0], [3.0]]
    rep = representation_oracle(atoms, None, DiscreteDistribution.uniform(atoms))
    assert rep.unbiased_zero.dim == 0
    assert rep.equal


def test_span_set_with_mirrors_lpq():
    y = canonical_span_set(3)
    atoms = np.vstack([y, -y])
    f = DiscreteDistribution.uniform(atoms)
    g = MomentConstraintSet(DesignMatrix(np.ones((3, 1))), [0.0], moment2_central(f))
    rep = representation_oracle(atoms, g, f)
    assert rep.equal
    assert rep.span_g.dim == 9


def test_oracle_rejects_infeasible_or_degenerate_witness():
    atoms = [[1.0], [-1.0]]
    g = MomentConstraintSet(DesignMatrix([[1.0]]), [0.0])
    with pytest.raises(InfeasibleWitnessError):
        representation_oracle(atoms, g, DiscreteDistribution(atoms, [0.75, 0.25]))
    with pytest.raises(InfeasibleWitnessError):
        representation_oracle([[1.0], [-1.0], [0.0]], g, DiscreteDistribution(atoms, [0.5, 0.5]))
    with pytest.raises(InfeasibleWitnessError):
        representation_oracle(atoms, g, DiscreteDistribution([[1.0], [-1.0], [0.0]], [0.5, 0.5, 0.0]))


def test_interior_witness_is_feasible_and_positive():
    atoms = grid_atoms([-1, 0, 1], 2)
    g = MomentConstraintSet(DesignMatrix(np.ones((2, 1))), [0.2], 0.5 * np.eye(2))
    f = interior_witness(atoms, g)
    assert np.all(f.weights > 0)
    rep = representation_oracle(atoms, g, f)
    assert rep.equal


def test_relative_interior_detects_forced_zeros():
    # w0 + w1 + w2 = 1 and w1 - w2 = 1 forces w2 = 0, w0 = 0
    cons = np.array([[1.0, 1.0, 1.0], [0.0, 1.0, -1.0]])
    w, support = relative_interior_point(cons, np.array([1.0, 1.0]))
    np.testing.assert_array_equal(support, [False, True, False])
    assert relative_interior_point(np.array([[1.0, 1.0], [1.0, 1.0]]), np.array([1.0, 2.0])) is None


A2 = grid_atoms(range(-2, 3), 2)
A3 = grid_atoms([-1, 0, 1], 3)


def test_family_linear():
    fam = ModelFamily(DesignMatrix(np.ones((2, 1))), ([0.0], [1.0]))
    rep = family_representation(fam, A2)
    assert rep.kind == "linear" and rep.equal and rep.matches_closed_form
    assert rep.unbiased_zero.dim == 1
    assert "linear representation confirmed" in rep.summary()


def test_family_lpq():
    fam = ModelFamily(DesignMatrix(np.ones((2, 1))), ([0.0], [0.5], [-0.5]),
                      (0.5 * np.eye(2), np.eye(2)))
    rep = family_representation(fam, A2)
    assert rep.kind == "lpq" and rep.equal and rep.matches_closed_form
    assert rep.quadratic_dim == 1


def test_family_collapse():
    s = np.array([[1.0, 0.5], [0.5, 1.0]])
    grid = tuple(t * m for m in (np.eye(2), np.diag([1.0, 0.5]), s) for t in (0.5, 1.0))
    fam = ModelFamily(DesignMatrix(np.ones((2, 1))), ([0.0], [0.5], [-0.5]), grid)
    rep = family_representation(fam, A2)
    assert rep.kind == "collapsed" and rep.equal
    assert rep.quadratic_dim == 0


def test_family_infeasible_member():
    fam = ModelFamily(DesignMatrix(np.ones((2, 1))), ([0.0], [5.0]))
    with pytest.raises(InfeasibleWitnessError):
        family_representation(fam, grid_atoms([-1, 0, 1], 2))


# --------------------------------------------------------------------------- min variance


def test_min_variance_symmetric_errors_keeps_gls():
    x = np.ones((3, 1))
    c = build_constraints(x, np.eye(3))
    f = product([rademacher()] * 3)
    u, v = min_variance_member(c, f, [1.0])
    assert np.abs(u.kernels).max() < 1e-12
    assert abs(v - variance_under(gls(x, np.eye(3)), f)[0, 0]) < 1e-12


def test_min_variance_symmetric_matches_grid_search():
    x = np.array([[1.0], [2.0], [3.0]])
    c = build_constraints(x, np.eye(3))
    f = shift(product([rademacher()] * 3), x[:, 0] * 0.5)
    _, v = min_variance_member(c, f, [1.0])
    assert abs(v - brute_force_min_variance(c, f, [1.0])) < 1e-9


def test_min_variance_skewed_strict_gain_and_oracle():
    x = np.array([[1.0, 0.0], [1.0, 1.0], [1.0, 2.0]])
    c = build_constraints(x, np.eye(3))
    f = product([skewed_two_point()] * 3)
    for direction, base, best in (([1.0, 0.0], 5 / 6, 7 / 9), ([0.0, 1.0], 1 / 2, 4 / 9)):
        _, v = min_variance_member(c, f, direction)
        gls_var = np.array(direction) @ variance_under(gls(x, np.eye(3)), f) @ np.array(direction)
        assert abs(gls_var - base) < 1e-12
        assert abs(v - best) < 1e-12
        assert abs(brute_force_min_variance(c, f, direction) - best) < 1e-9


def test_direction_homogeneity():
    x = np.array([[1.0, 0.0], [1.0, 1.0], [1.0, 2.0]])
    c = build_constraints(x, np.eye(3))
    f = product([skewed_two_point()] * 3)
    u1, v1 = min_variance_member(c, f, [1.0, 0.0])
    u5, v5 = min_variance_member(c, f, [5.0, 0.0])
    assert abs(v5 - 25 * v1) < 1e-10
    assert np.abs(u1.a[:, 0] - u5.a[:, 0]).max() < 1e-10
    assert np.abs(u1.kernels[0] - u5.kernels[0]).max() < 1e-10


def test_min_variance_rejects_mismatch():
    x = np.ones((3, 1))
    c = build_constraints(x, np.diag([2.0, 1.0, 1.0]))
    with pytest.raises(MomentMismatchError):
        min_variance_member(c, product([rademacher()] * 3), [1.0])
    off_mean = DiscreteDistribution([[1.0, 0.0, 0.0], [-1.0, 2.0, 0.0]], [0.5, 0.5])
    with pytest.raises(MomentMismatchError):
        min_variance_member(build_constraints(x, np.eye(3)), off_mean, [1.0])
    with pytest.raises(ValueError):
        min_variance_member(build_constraints(x, np.eye(3)), product([rademacher()] * 3), [0.0])


@settings(max_examples=25)
@given(st.integers(2, 4), st.integers(0, 2**31))
def test_min_variance_never_exceeds_gls(n, seed):
    rng = np.random.default_rng(seed)
    k = int(rng.integers(1, n))
    x = random_design(rng, n, k)
    s = random_pd(rng, n)
    f = make_witness_mean_cov(x, rng.standard_normal(k), 2.0 * s)
    d = rng.standard_normal(k)
    _, v = min_variance_member(build_constraints(x, s), f, d)
    assert v <= d @ variance_under(gls(x, s), f) @ d + 1e-12


# --------------------------------------------------------------------------- certificate


def test_certificate_gls_trivial():
    x = np.ones((4, 1))
    f = product([skewed_two_point()] * 4)
    cert = bue_certificate(gls(x, np.eye(4)), x, f, np.eye(4))
    assert cert.passed
    for m in (cert.term1, cert.term2, cert.term3, cert.cross_cov):
        assert np.abs(m).max() < 1e-14


def test_certificate_ub_symmetric_passes(rng):
    x = random_design(rng, 5, 2)
    u = make_ub_estimator(x, construct_quadratic_null(x))
    f = shift(product([rademacher()] * 5), x @ rng.standard_normal(2))
    cert = bue_certificate(u, x, f, np.eye(5))
    assert cert.passed
    assert cert.decomposition_error < 1e-12


def cubic_term(b, g_col):
    """``(g'e)(e'Be)`` as explicit degree-3 monomials in the centered errors ``e``."""
    n = len(g_col)
    terms = tuple(((i, a, c), g_col[i] * b[a, c])
                  for i in range(n) for a in range(n) for c in range(n) if g_col[i] * b[a, c])
    return Polynomial(n, terms=terms)


def test_certificate_skewed_pair_fails_with_oracle():
    x = np.ones((4, 1))
    b = construct_quadratic_null(x)
    u = make_ub_estimator(x, b)
    i, j = np.unravel_index(np.abs(b).argmax(), b.shape)
    f = skewed_pair(x, [0.3], i, j, np.eye(4))
    cert = bue_certificate(u, x, f, np.eye(4))
    assert not cert.passed
    assert abs(cert.term3[0, 0]) > 1e-6
    assert cert.decomposition_error < 1e-12
    p = cubic_term(b, gls(x, np.eye(4)).a[:, 0])
    centered = DiscreteDistribution(f.atoms - 0.3, f.weights)
    assert abs(expect_poly(centered, p) - cert.term3[0, 0]) < 1e-12


def test_certificate_moment_mismatch():
    x = np.ones((3, 1))
    with pytest.raises(MomentMismatchError):
        bue_certificate(ols(x), x, product([rademacher()] * 3), np.diag([1.0, 2.0, 3.0]))


@settings(max_examples=30)
@given(st.integers(2, 5), st.integers(0, 2**31))
def test_decomposition_identity(n, seed):
    rng = np.random.default_rng(seed)
    k = int(rng.integers(1, n + 1))
    x = random_design(rng, n, k)
    s = random_pd(rng, n)
    f = make_witness_mean_cov(x, rng.standard_normal(k), s)
    u = LPQEstimator(rng.standard_normal((n, k)), rng.standard_normal((k, n, n)))
    cert = bue_certificate(u, x, f, s)
    assert cert.decomposition_error < 1e-12 * max(1.0, np.abs(cert.cross_cov).max())


# --------------------------------------------------------------------------- G3


def test_g3_examples():
    x = np.ones((3, 1))
    assert check_g3(product([rademacher()] * 3), x, np.eye(3))
    assert check_g3(product([skewed_two_point()] * 3), x, np.eye(3))
    assert not check_g3(skewed_pair(x, [0.0], 0, 1, np.eye(3)), x, np.eye(3))
    with pytest.raises(ValueError):
        check_g3(product([rademacher()] * 3), x, np.diag([1.0, 1.0, 0.0]))


def test_g3_factorization_oracle():
    f = product([skewed_two_point()] * 3)
    t = whitened_third_moments(f, np.eye(3))
    mu3 = 1 / np.sqrt(2.0)
    for idx in np.ndindex(3, 3, 3):
        p = Polynomial(3, terms=((idx, 1.0),))
        assert abs(expect_poly(f, p) - t[idx]) < 1e-14
        expected = mu3 if len(set(idx)) == 1 else 0.0
        assert abs(t[idx] - expected) < 1e-14


# --------------------------------------------------------------------------- tables


def het_law():
    s2 = np.sqrt(2.0)
    return DiscreteDistribution(
        [[1, s2, 2], [-1, -s2, -2], [1, -s2, 2], [-1, s2, -2]], [0.25] * 4)


def test_table_point_mass_and_aitken():
    x = np.ones((3, 1))
    sigma = np.diag([1.0, 2.0, 4.0])
    rows = variance_comparison_table(
        {"ols": ols(x), "gls": gls(x, sigma)},
        {"pm": DiscreteDistribution.point_mass([0.0, 0.0, 0.0]), "het": het_law()},
    )
    by = {(r.estimator, r.distribution): r.variance for r in rows}
    assert by[("ols", "pm")] == 0.0
    assert by[("gls", "het")] <= by[("ols", "het")]


def test_table_invalid_cell_and_determinism():
    ests = {"ols": ols(np.ones((3, 1))), "short": ols(np.ones((2, 1)))}
    fs = {"het": het_law()}
    rows = variance_comparison_table(ests, fs)
    assert rows[1].variance is None
    text = table_to_csv(rows)
    assert text.splitlines()[0] == "estimator,distribution,coordinate,variance"
    assert "short,het,0,invalid" in text
    assert table_to_csv(variance_comparison_table(ests, fs, n_jobs=4)) == text
    assert table_to_json(rows) == table_to_json(variance_comparison_table(ests, fs))
    assert '"variance": null' in table_to_json(rows)


def test_csv_uses_17_digits():
    rows = variance_comparison_table({"u": LPQEstimator([[1.0 / 3.0]])}, {"r": rademacher()})
    assert table_to_csv(rows).splitlines()[1] == "u,r,0," + format(1.0 / 9.0, ".17g")
