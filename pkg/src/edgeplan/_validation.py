"""Input checks shared by the estimators and the functional API."""
from __future__ import annotations

import numpy as np
from sklearn.utils.validation import check_array


def check_workload(w, n_stations=None, name="workload") -> np.ndarray:
    """Return ``w`` as a finite, nonnegative float vector."""
    w = np.asarray(w, dtype=float)
    if w.ndim != 1:
        raise ValueError(f"{name} must be a vector, got shape {w.shape}")
    if not np.isfinite(w).all():
        raise ValueError(f"{name} contains non-finite entries")
    if (w < 0).any():
        raise ValueError(f"{name} contains negative entries")
    if n_stations is not None and w.shape[0] != n_stations:
        raise ValueError(f"{name} has length {w.shape[0]}, expected {n_stations}")
    return w


def check_workload_matrix(X, n_stations=None, name="X") -> np.ndarray:
    """Return ``X`` as a 2-D array of nonnegative workloads (rows are frames)."""
    X = check_array(X, dtype=float, ensure_2d=True, input_name=name)
    if (X < 0).any():
        raise ValueError(f"{name} contains negative workloads")
    if n_stations is not None and X.shape[1] != n_stations:
        raise ValueError(f"{name} has {X.shape[1]} columns, expected {n_stations}")
    return X


def check_servers(s, n_stations=None, integer=False, name="servers") -> np.ndarray:
    s = check_workload(s, n_stations, name=name)
    if integer:
        if not np.allclose(s, np.round(s)):
            raise ValueError(f"{name} must be integral")
        return np.round(s).astype(np.int64)
    return s


def check_random_state_seed(seed) -> np.random.Generator:
    """Seeded generator from an int, a Generator, or None."""
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)
