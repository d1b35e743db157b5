"""Input checks shared by the estimator wrappers."""

import numbers

import numpy as np
from sklearn.utils.validation import check_array


def check_times(t, name="t", strictly_increasing=True):
    """1-D finite float array of times."""
    t = check_array(np.asarray(t, dtype=float).reshape(-1, 1), ensure_min_samples=2).ravel()
    if strictly_increasing and np.any(np.diff(t) <= 0):
        raise ValueError(f"{name} must be strictly increasing")
    return t


def check_vectors(X, dim=3, name="X"):
    X = check_array(X, dtype=float)
    if X.shape[1] != dim:
        raise ValueError(f"{name} must have {dim} columns, got {X.shape[1]}")
    return X


def check_unit_rows(X, tol=1e-10, name="X"):
    """Rows must have unit norm within ``tol``."""
    X = check_vectors(X, X.shape[1] if np.ndim(X) == 2 else 3, name)
    err = np.max(np.abs(np.linalg.norm(X, axis=1) - 1.0))
    if err > tol:
        raise ValueError(f"{name} rows are not unit vectors (max error {err:.2e})")
    return X


def check_scalar_range(value, name, low=None, high=None, include_low=True, include_high=True,
                       kind=numbers.Real):
    if not isinstance(value, kind) or isinstance(value, bool):
        raise TypeError(f"{name} must be a {kind.__name__}, got {type(value).__name__}")
    if low is not None and (value < low or (value == low and not include_low)):
        raise ValueError(f"{name}={value!r} below allowed range")
    if high is not None and (value > high or (value == high and not include_high)):
        raise ValueError(f"{name}={value!r} above allowed range")
    return value
