"""Exact construction and verification of unbiased estimators for fixed-design linear models."""

from .analysis import (
    bue_certificate,
    check_g3,
    family_representation,
    min_variance_member,
    representation_oracle,
    variance_comparison_table,
)
from .dist import (
    DiscreteDistribution,
    canonical_span_set,
    make_composite_witness,
    make_witness_mean,
    make_witness_mean_cov,
)
from .estimator import LinearEstimator, LPQEstimator, gls, ols
from .koopmann import (
    build_constraints,
    construct_quadratic_null,
    is_member,
    make_ub_estimator,
    parameterize_member,
)
from .linalg import Subspace, sym_unvec, sym_vec
from .model import DesignMatrix, ModelFamily, MomentConstraintSet, constraint_functions

__version__ = "0.1.0"

__all__ = [
    "DesignMatrix",
    "DiscreteDistribution",
    "LPQEstimator",
    "LinearEstimator",
    "ModelFamily",
    "MomentConstraintSet",
    "Subspace",
    "bue_certificate",
    "build_constraints",
    "canonical_span_set",
    "check_g3",
    "constraint_functions",
    "construct_quadratic_null",
    "family_representation",
    "gls",
    "is_member",
    "make_composite_witness",
    "make_ub_estimator",
    "make_witness_mean",
    "make_witness_mean_cov",
    "min_variance_member",
    "ols",
    "parameterize_member",
    "representation_oracle",
    "sym_unvec",
    "sym_vec",
    "variance_comparison_table",
]
