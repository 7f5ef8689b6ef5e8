"""Input validation helpers shared by the public functions and estimators."""
import numbers

import numpy as np


def check_positive_int(value, name, minimum=1):
    if isinstance(value, bool) or not isinstance(value, numbers.Integral):
        raise TypeError(f"{name} must be an integer, got {type(value).__name__}")
    if value < minimum:
        raise ValueError(f"{name} must be >= {minimum}, got {value}")
    return int(value)


def check_seed(seed):
    if isinstance(seed, bool) or not isinstance(seed, numbers.Integral):
        raise TypeError(f"seed must be an integer, got {type(seed).__name__}")
    if seed < 0:
        raise ValueError(f"seed must be non-negative, got {seed}")
    return int(seed)


def check_vector(v, n=None, name="vector", dtype=complex):
    """Return `v` as a contiguous 1-D array, checking its length and finiteness."""
    arr = np.asarray(v)
    if arr.ndim != 1:
        arr = arr.reshape(-1)
    arr = np.ascontiguousarray(arr, dtype=dtype)
    if n is not None and arr.shape[0] != n:
        raise ValueError(f"{name} has length {arr.shape[0]}, expected {n}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite entries")
    return arr


def check_intensities(g, m=None, name="measurements"):
    """Measurements must be real, finite and non-negative."""
    arr = np.asarray(g)
    if np.iscomplexobj(arr):
        if np.any(arr.imag != 0):
            raise ValueError(f"{name} must be real")
        arr = arr.real
    arr = check_vector(arr, m, name=name, dtype=float)
    if np.any(arr < 0):
        raise ValueError(f"{name} has negative entries; clamp before use")
    return arr


def check_unit_interval(value, name, open_low=True, open_high=True):
    value = float(value)
    lo_ok = value > 0 if open_low else value >= 0
    hi_ok = value < 1 if open_high else value <= 1
    if not (lo_ok and hi_ok):
        raise ValueError(f"{name} must lie in (0, 1), got {value}")
    return value
