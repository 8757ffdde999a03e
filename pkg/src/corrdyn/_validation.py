"""Input validation helpers shared across the package."""

from __future__ import annotations

import numpy as np


def check_finite_2d(X, name="X"):
    """Return ``X`` as a float64 2-D array, raising on NaN/inf or wrong rank."""
    arr = np.asarray(X, dtype=np.float64)
    if arr.ndim != 2:
        raise ValueError(f"{name} must be 2-D, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite values")
    return arr


def check_nonnegative(X, name="X"):
    arr = check_finite_2d(X, name)
    if np.any(arr < 0):
        raise ValueError(f"{name} must be nonnegative; encode signed data first")
    return arr


def check_unique(labels, what="labels"):
    seen = set()
    for lab in labels:
        if lab in seen:
            raise ValueError(f"duplicate {what}: {lab!r}")
        seen.add(lab)


def check_fraction(value, name, *, low_open=True, high_open=False):
    lo_ok = value > 0 if low_open else value >= 0
    hi_ok = value < 1 if high_open else value <= 1
    if not (lo_ok and hi_ok):
        raise ValueError(f"{name} out of range: {value}")
    return float(value)


def ms_to_samples(ms, fs):
    """Convert a signed duration in milliseconds to a whole sample count."""
    return int(round(ms * fs / 1000.0))


def frozen(arr):
    """Copy ``arr`` to a read-only float64 array."""
    out = np.array(arr, dtype=np.float64, copy=True)
    out.setflags(write=False)
    return out
