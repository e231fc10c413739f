"""Input validation helpers shared by the estimators."""

import numpy as np
from sklearn.utils import check_array


def check_contention_array(X):
    """Validate an ``(n, 4)`` contention matrix; core usage is clamped to 1."""
    X = check_array(X, dtype=np.float64, ensure_2d=True, ensure_all_finite=True)
    if X.shape[1] != 4:
        raise ValueError(f"contention arrays need 4 columns, got {X.shape[1]}")
    if np.any(X < 0):
        raise ValueError("contention readings must be non-negative")
    if np.any(X[:, 0] > 1.0):
        X = X.copy()
        np.minimum(X[:, 0], 1.0, out=X[:, 0])
    return X


def check_readings(X):
    """Validate one column of readings given as 1-D or ``(n, 1)``."""
    x = np.asarray(X, dtype=np.float64)
    if x.ndim == 2 and x.shape[1] == 1:
        x = x[:, 0]
    x = check_array(x, ensure_2d=False, dtype=np.float64, ensure_all_finite=True)
    if x.ndim != 1:
        raise ValueError(f"readings must be one-dimensional, got shape {x.shape}")
    return x


def check_service_times(y):
    y = check_array(y, ensure_2d=False, dtype=np.float64, ensure_all_finite=True)
    if y.ndim != 1:
        raise ValueError(f"service times must be one-dimensional, got shape {y.shape}")
    if np.any(y <= 0):
        raise ValueError("service times must be strictly positive")
    return y
