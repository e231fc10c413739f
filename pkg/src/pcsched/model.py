"""Contention-driven service-time model.

One ordinary-least-squares line per shared resource, each carrying a
relevance weight, and a combined regressor that takes the weighted mean of
the four lines. Both follow the scikit-learn estimator protocol so they can
be cloned, grid-searched and dropped into pipelines.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_is_fitted

from ._validation import check_contention_array, check_readings, check_service_times
from .contention import RESOURCES, ContentionVector, clip_contention
from .exceptions import DegenerateSamples, EmptySamples, TooFewSamples, ZeroWeightSum

DEFAULT_FLOOR = 1e-4  # 0.1 ms


def _resource_index(resource):
    try:
        return RESOURCES.index(resource)
    except ValueError:
        raise ValueError(f"resource must be one of {RESOURCES}, got {resource!r}") from None


class ResourceRegression(RegressorMixin, BaseEstimator):
    """Linear fit of service time against a single contention reading.

    Parameters
    ----------
    resource : {"core", "cache", "diskBW", "networkBW"}
        Which field of the contention vector this line explains.

    Attributes
    ----------
    intercept_, slope_ : float
        OLS coefficients of ``service_time = intercept_ + slope_ * reading``.
    weight_ : float
        Relevance of the resource, ``|pearson r|`` between reading and
        service time over the training set. Zero when the service times
        are constant.
    """

    def __init__(self, resource="core"):
        self.resource = resource

    def fit(self, X, y):
        _resource_index(self.resource)
        x = check_readings(X)
        y = check_service_times(y)
        if x.shape[0] != y.shape[0]:
            raise ValueError(f"X has {x.shape[0]} rows but y has {y.shape[0]}")
        if x.shape[0] < 3:
            raise TooFewSamples(f"{self.resource}: need at least 3 samples, got {x.shape[0]}")
        dx = x - x.mean()
        sxx = float(dx @ dx)
        if sxx == 0.0 or np.all(x == x[0]):
            raise DegenerateSamples(f"{self.resource}: all readings identical")
        dy = y - y.mean()
        sxy = float(dx @ dy)
        syy = float(dy @ dy)
        self.slope_ = sxy / sxx
        self.intercept_ = float(y.mean() - self.slope_ * x.mean())
        self.weight_ = 0.0 if syy == 0.0 else min(1.0, abs(sxy) / np.sqrt(sxx * syy))
        self.n_samples_ = x.shape[0]
        return self

    def predict(self, X):
        check_is_fitted(self, "slope_")
        x = check_readings(X)
        return self.intercept_ + self.slope_ * x

    @property
    def coefficients(self):
        check_is_fitted(self, "slope_")
        return (self.intercept_, self.slope_)

    @property
    def weight(self):
        check_is_fitted(self, "weight_")
        return self.weight_

    @classmethod
    def from_coefficients(cls, resource, intercept, slope, weight):
        """Build an already-fitted line from known coefficients."""
        _resource_index(resource)
        if not 0.0 <= weight <= 1.0:
            raise ValueError(f"weight must lie in [0, 1], got {weight}")
        reg = cls(resource=resource)
        reg.intercept_ = float(intercept)
        reg.slope_ = float(slope)
        reg.weight_ = float(weight)
        reg.n_samples_ = 0
        return reg

    @classmethod
    def _constant(cls, resource, value):
        # resource that never varied during training: no information, no weight
        return cls.from_coefficients(resource, value, 0.0, 0.0)


class CombinedModel(RegressorMixin, BaseEstimator):
    """Weighted combination of the four per-resource lines.

    ``predict`` averages the four lines' predictions by weight and clamps
    the result to ``floor`` seconds, so extrapolation never yields a
    non-positive service time.

    A resource whose readings never vary during ``fit`` contributes a
    zero-weight line instead of aborting the fit. If no resource earns any
    weight, the fitted model predicts the training mean.
    """

    def __init__(self, floor=DEFAULT_FLOOR):
        self.floor = floor

    def fit(self, X, y):
        X = check_contention_array(X)
        y = check_service_times(y)
        if X.shape[0] != y.shape[0]:
            raise ValueError(f"X has {X.shape[0]} rows but y has {y.shape[0]}")
        if X.shape[0] < 3:
            raise TooFewSamples(f"need at least 3 samples, got {X.shape[0]}")
        regs = []
        for idx, resource in enumerate(RESOURCES):
            try:
                regs.append(ResourceRegression(resource).fit(X[:, idx], y))
            except DegenerateSamples:
                regs.append(ResourceRegression._constant(resource, float(y.mean())))
        if not any(r.weight_ > 0 for r in regs):
            # no reading explains y: every line is flat at mean(y), so weight them equally
            for r in regs:
                r.weight_ = 1.0
        self._set_regressions(regs)
        return self

    def _set_regressions(self, regressions):
        if self.floor <= 0:
            raise ValueError(f"floor must be > 0, got {self.floor}")
        regressions = list(regressions)
        if sorted(r.resource for r in regressions) != sorted(RESOURCES) or len(regressions) != 4:
            raise ValueError(f"need exactly one regression per resource {RESOURCES}")
        regressions.sort(key=lambda r: _resource_index(r.resource))
        for r in regressions:
            check_is_fitted(r, "slope_")
        self.regressions_ = tuple(regressions)
        self.intercepts_ = np.array([r.intercept_ for r in regressions])
        self.slopes_ = np.array([r.slope_ for r in regressions])
        self.weights_ = np.array([r.weight_ for r in regressions])
        weight_sum = float(self.weights_.sum())
        if not weight_sum > 0:
            raise ZeroWeightSum("sum of resource weights is zero")
        self.weight_sum_ = weight_sum

    @classmethod
    def from_regressions(cls, regressions, floor=DEFAULT_FLOOR):
        model = cls(floor=floor)
        model._set_regressions(regressions)
        return model

    def predict(self, X):
        check_is_fitted(self, "regressions_")
        return self.predict_raw(check_contention_array(X))

    def predict_raw(self, U):
        """Evaluate on an already-validated ``(..., 4)`` array (no copies)."""
        per_resource = self.intercepts_ + self.slopes_ * U
        combined = (per_resource @ self.weights_) / self.weight_sum_
        return np.maximum(combined, self.floor)

    def per_resource_predictions(self, X):
        check_is_fitted(self, "regressions_")
        return self.intercepts_ + self.slopes_ * check_contention_array(X)

    def is_monotone(self):
        """True when no resource slope is negative."""
        return bool(np.all(self.slopes_ >= 0))


def train_resource_regression(samples, resource):
    """Fit one per-resource line from ``(reading, service_time)`` pairs."""
    samples = list(samples)
    if len(samples) < 3:
        raise TooFewSamples(f"{resource}: need at least 3 samples, got {len(samples)}")
    x = np.array([s[0] for s in samples], dtype=float)
    y = np.array([s[1] for s in samples], dtype=float)
    return ResourceRegression(resource).fit(x, y)


def build_combined_model(regressions, floor=DEFAULT_FLOOR):
    return CombinedModel.from_regressions(regressions, floor=floor)


def predict_service_time(model, u):
    u = u.as_array() if isinstance(u, ContentionVector) else clip_contention(np.asarray(u, float))
    return float(model.predict_raw(u.reshape(1, 4))[0])


def service_time_stats(model, samples):
    """Mean and population variance of predicted service time over samples."""
    samples = list(samples)
    if not samples:
        raise EmptySamples("need at least one contention sample")
    U = np.array([s.as_array() if isinstance(s, ContentionVector) else s for s in samples], float)
    preds = model.predict_raw(clip_contention(U.reshape(-1, 4)))
    return float(preds.mean()), float(preds.var())
