"""Input validation shared by the estimators, the harness and the CLI."""
from __future__ import annotations

import numbers

import numpy as np
from sklearn.utils import check_array

from .exceptions import ConfigError

__all__ = ["check_series", "check_seed", "check_positive_int"]


def check_series(X, min_n: int = 1) -> np.ndarray:
    """Return a finite 1-D float array from a sequence or a single-column matrix."""
    if X is None:
        raise ConfigError("no data given")
    arr = np.asarray(X)
    if arr.ndim == 2 and arr.shape[1] == 1:
        arr = arr[:, 0]
    if arr.ndim != 1:
        raise ConfigError(f"data must be one-dimensional, got shape {arr.shape}")
    try:
        arr = check_array(arr[:, None], dtype=np.float64, ensure_all_finite=True,
                          ensure_min_samples=1)[:, 0]
    except ValueError as exc:
        raise ConfigError(f"invalid data: {exc}") from exc
    if arr.size < min_n:
        raise ConfigError(f"need at least {min_n} observations, got {arr.size}")
    return arr


def check_seed(seed, name: str = "seed") -> int:
    if isinstance(seed, bool) or not isinstance(seed, numbers.Integral) or seed < 0:
        raise ConfigError(f"{name} must be a non-negative integer, got {seed!r}")
    return int(seed)


def check_positive_int(value, name: str) -> int:
    if isinstance(value, bool) or not isinstance(value, numbers.Integral) or value < 1:
        raise ConfigError(f"{name} must be a positive integer, got {value!r}")
    return int(value)
