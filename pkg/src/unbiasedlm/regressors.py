"""scikit-learn style wrappers around the functional estimators.

In a fixed-design model one fit sees the whole design ``X`` (``n x k``) and a
single response vector ``y`` (length ``n``); the fitted ``coef_`` is the
estimate of beta and ``predict`` returns ``X @ coef_``.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .estimator import LPQEstimator, gls, ols
from .koopmann import construct_quadratic_null, make_ub_estimator, whitened_ub_estimator
from .model import DesignMatrix


class _FixedDesignRegressor(RegressorMixin, BaseEstimator):
    def _build(self, design: DesignMatrix) -> LPQEstimator:
        raise NotImplementedError

    def fit(self, X, y):
        X, y = check_X_y(X, y, y_numeric=True)
        design = DesignMatrix(X)
        self.estimator_ = self._build(design)
        self.coef_ = self.estimator_(y)
        self.n_features_in_ = design.k
        return self

    def predict(self, X):
        check_is_fitted(self, "coef_")
        X = check_array(X)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(f"X has {X.shape[1]} columns, expected {self.n_features_in_}")
        return X @ self.coef_


class GLSRegressor(_FixedDesignRegressor):
    """Generalized least squares for a known covariance shape (OLS when ``sigma`` is None)."""

    def __init__(self, sigma=None):
        self.sigma = sigma

    def _build(self, design):
        if self.sigma is None:
            return ols(design)
        return gls(design, np.asarray(self.sigma, dtype=float))


class UBRegressor(_FixedDesignRegressor):
    """Least squares plus a quadratic term with zero mean under every diagonal covariance.

    With ``sigma`` given, the construction runs in whitened coordinates so the
    quadratic has zero mean under every covariance sharing ``sigma``'s eigenvectors.
    """

    def __init__(self, sigma=None):
        self.sigma = sigma

    def _build(self, design):
        if self.sigma is None:
            return make_ub_estimator(design, construct_quadratic_null(design))
        return whitened_ub_estimator(design, np.asarray(self.sigma, dtype=float))


class LPQRegressor(_FixedDesignRegressor):
    """Applies a fixed LPQ estimator whose shape must match the design."""

    def __init__(self, estimator: LPQEstimator | None = None):
        self.estimator = estimator

    def _build(self, design):
        if self.estimator is None:
            raise ValueError("LPQRegressor needs an estimator")
        if (self.estimator.n, self.estimator.k) != (design.n, design.k):
            raise ValueError(
                f"estimator is {self.estimator.n}x{self.estimator.k}, design is {design.n}x{design.k}"
            )
        return self.estimator
