import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from unbiasedlm.dist import (
    DiscreteDistribution,
    WitnessError,
    canonical_span_set,
    expect_poly,
    lift,
    load_distribution,
    make_composite_witness,
    make_witness_mean,
    make_witness_mean_cov,
    member_witness,
    mixture,
    moment1,
    moment2_central,
    moment3_central,
    product,
    skewed_pair,
    skewed_two_point,
)
from unbiasedlm.linalg import matrix_rank
from unbiasedlm.model import DesignMatrix, ModelFamily, Polynomial

from conftest import random_design, random_pd


def test_distribution_validation():
    with pytest.raises(ValueError):
        DiscreteDistribution([[0.0], [1.0]], [0.5, 0.6])
    with pytest.raises(ValueError):
        DiscreteDistribution([[0.0], [1.0]], [1.5, -0.5])
    f = DiscreteDistribution([[0.0], [1e-14], [1.0]], [0.25, 0.25, 0.5])
    assert f.size == 2
    np.testing.assert_array_equal(f.weights, [0.5, 0.5])


def test_json_round_trip(tmp_path):
    f = DiscreteDistribution([[1.0, 2.0], [3.0, 4.0]], [0.25, 0.75])
    p = tmp_path / "f.json"
    p.write_text(json.dumps(f.to_dict()))
    g = load_distribution(p)
    np.testing.assert_array_equal(g.atoms, f.atoms)
    np.testing.assert_array_equal(g.weights, f.weights)


def test_moment1_examples():
    y = np.array([1.5, -2.0])
    np.testing.assert_array_equal(moment1(DiscreteDistribution.point_mass(y)), y)
    sym = DiscreteDistribution([[1.0, 0.0], [-1.0, 0.0]], [0.5, 0.5])
    np.testing.assert_array_equal(moment1(sym), [0.0, 0.0])


def test_moment2_examples():
    assert not np.any(moment2_central(DiscreteDistribution.point_mass([1.0, 2.0])))
    f = DiscreteDistribution.uniform([[1, 0], [-1, 0], [0, 1], [0, -1]])
    np.testing.assert_array_equal(moment2_central(f), 0.5 * np.eye(2))


def test_expect_poly_examples():
    f = DiscreteDistribution([[1.0, 0.0], [-1.0, 0.0]], [0.5, 0.5])
    assert expect_poly(f, Polynomial(2, constant=1.0)) == 1.0
    assert expect_poly(f, Polynomial(2, linear=[1.0, 0.0])) == 0.0
    square = DiscreteDistribution.uniform([[1, 1], [1, -1], [-1, 1], [-1, -1]])
    assert expect_poly(square, Polynomial(2, terms=(((0, 0, 1, 1), 1.0),))) == 1.0


def test_expect_poly_dimension_check():
    with pytest.raises(ValueError):
        expect_poly(DiscreteDistribution.point_mass([0.0]), Polynomial(2, constant=1.0))


def test_witness_mean_zero_beta():
    d = DesignMatrix(np.ones((2, 1)))
    f0, f1 = make_witness_mean(d, [0.0])
    np.testing.assert_array_equal(moment1(f0), 0.0)
    np.testing.assert_array_equal(moment1(f1), 0.0)
    expected = {(1.0, 0.0), (0.0, 1.0), (-1.0, 0.0), (0.0, -1.0)}
    assert {tuple(a) for a in f1.atoms} == expected
    assert {tuple(a) for a in f0.atoms} == expected


def test_witness_mean_hand_case():
    d = DesignMatrix(np.eye(2))
    f1 = make_witness_mean(d, [1.0, 0.0])[1]
    # e1, e2, 2Xb - e1 = (1, 0), 2Xb - e2 = (2, -1); (1, 0) merges
    assert {tuple(a) for a in f1.atoms} == {(1.0, 0.0), (0.0, 1.0), (2.0, -1.0)}
    np.testing.assert_allclose(moment1(f1), [1.0, 0.0], atol=1e-15)


@given(st.integers(1, 6), st.integers(0, 2**31))
def test_witness_mean_property(n, seed):
    rng = np.random.default_rng(seed)
    k = int(rng.integers(1, n + 1))
    d = DesignMatrix(random_design(rng, n, k))
    beta = rng.standard_normal(k)
    f0, f1 = make_witness_mean(d, beta)
    assert np.abs(moment1(f0)).max() < 1e-12
    assert np.abs(moment1(f1) - d.mean(beta)).max() < 1e-12
    assert f0.size <= 4 * n and f1.size <= 2 * n


def test_witness_mean_cov_hand_case():
    d = DesignMatrix(np.ones((2, 1)))
    f = make_witness_mean_cov(d, [0.0], np.eye(2))
    # c = 1/2: base {+-e_i} with weight 1/8 each, pairs +-sqrt(3) e_i with weight 1/8 each
    s3 = np.sqrt(3.0)
    atoms = {tuple(np.round(a, 12)) for a in f.atoms}
    assert atoms == {(1.0, 0.0), (-1.0, 0.0), (0.0, 1.0), (0.0, -1.0),
                     (round(s3, 12), 0.0), (round(-s3, 12), 0.0), (0.0, round(s3, 12)), (0.0, round(-s3, 12))}
    np.testing.assert_allclose(f.weights, 1 / 8)
    assert np.abs(moment2_central(f) - np.eye(2)).max() < 1e-12


def test_witness_mean_cov_zero_residual():
    d = DesignMatrix(np.ones((2, 1)))
    lam = 0.5 * np.eye(2)          # the covariance of the base itself
    f = make_witness_mean_cov(d, [1.0], lam)
    assert np.abs(moment1(f) - 1.0).max() < 1e-12
    assert np.abs(moment2_central(f) - lam).max() < 1e-12


@given(st.integers(1, 5), st.integers(0, 2**31), st.sampled_from(["axes", "span"]))
def test_witness_mean_cov_property(n, seed, base):
    rng = np.random.default_rng(seed)
    k = int(rng.integers(1, n + 1))
    d = DesignMatrix(random_design(rng, n, k))
    beta = rng.standard_normal(k)
    lam = random_pd(rng, n, floor=0.05)
    f = make_witness_mean_cov(d, beta, lam, base=base)
    assert np.abs(moment1(f) - d.mean(beta)).max() < 1e-10
    assert np.abs(moment2_central(f) - lam).max() < 1e-10


def test_witness_mean_cov_rejects_singular():
    d = DesignMatrix(np.ones((2, 1)))
    with pytest.raises(WitnessError):
        make_witness_mean_cov(d, [0.0], np.diag([1.0, 0.0]))


def test_canonical_span_set_small():
    np.testing.assert_array_equal(canonical_span_set(1), [[1.0], [2.0]])
    np.testing.assert_array_equal(lift(canonical_span_set(1)), [[1.0, 1.0], [2.0, 4.0]])
    y = canonical_span_set(2)
    assert {tuple(a) for a in y} == {(1, 0), (0, 1), (2, 0), (1, 1), (0, 2)}
    assert matrix_rank(lift(y)) == 5
    assert len(canonical_span_set(4)) == 14 and matrix_rank(lift(canonical_span_set(4))) == 14


def test_composite_first_moment_only():
    fam = ModelFamily(DesignMatrix(np.ones((2, 1))), ([0.0],))
    f = make_composite_witness(fam, [1.0, 0.0])
    assert np.abs(moment1(f)).max() < 1e-12
    assert f.support_contains([[1.0, 0.0]])


def covariance_family():
    d = DesignMatrix(np.array([[1.0], [2.0], [0.5]]))
    lams = (np.eye(3), np.diag([2.0, 1.0, 0.5]))
    return ModelFamily(d, ([1.0], [-0.5], [2.0]), lams)


def test_composite_support_inclusion_and_moments():
    fam = covariance_family()
    y = np.array([3.0, -1.0, 0.25])
    f = make_composite_witness(fam, y)
    assert f.support_contains(y[None, :])
    assert f.support_contains(canonical_span_set(3))
    for beta, lam in fam.members():
        assert f.support_contains(member_witness(fam, beta, lam).atoms)
    assert np.abs(moment1(f) - fam.design.mean(fam.betas[0])).max() < 1e-10
    assert np.abs(moment2_central(f) - fam.covariances[0]).max() < 1e-10


def test_composite_support_inclusion_first_moment():
    fam = ModelFamily(DesignMatrix(np.array([[1.0], [2.0]])), ([1.0], [-1.0], [0.5]))
    f = make_composite_witness(fam, [5.0, 5.0])
    for beta, _ in fam.members():
        assert f.support_contains(member_witness(fam, beta).atoms)
    assert np.abs(moment1(f) - fam.design.mean([1.0])).max() < 1e-12


def test_skewed_two_point_moments():
    s = skewed_two_point()
    assert abs(moment1(s)[0]) < 1e-15
    assert abs(moment2_central(s)[0, 0] - 1.0) < 1e-15
    assert abs(moment3_central(s)[0, 0, 0] - 1 / np.sqrt(2.0)) < 1e-15


def test_product_mixed_third_moments_vanish():
    f = product([skewed_two_point()] * 3)
    t = moment3_central(f)
    mask = np.ones_like(t, dtype=bool)
    mask[np.arange(3), np.arange(3), np.arange(3)] = False
    assert np.abs(t[mask]).max() < 1e-15


def test_skewed_pair_moments():
    d = DesignMatrix(np.ones((4, 1)))
    f = skewed_pair(d, [0.3], 0, 1, np.eye(4))
    assert np.abs(moment1(f) - 0.3).max() < 1e-12
    assert np.abs(moment2_central(f) - np.eye(4)).max() < 1e-12
    assert abs(moment3_central(f)[0, 0, 1]) > 1e-3


def test_mixture_weights():
    a = DiscreteDistribution.point_mass([0.0])
    b = DiscreteDistribution.point_mass([1.0])
    m = mixture([a, b], [0.25, 0.75])
    assert abs(moment1(m)[0] - 0.75) < 1e-15
