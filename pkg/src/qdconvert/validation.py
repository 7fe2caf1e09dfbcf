"""Input validation helpers in the spirit of ``sklearn.utils.validation``."""

import math

import numpy as np

from .errors import ConfigError, UnsortedInputError


def check_tag_array(t, name="tags", check_sorted=True) -> np.ndarray:
    """Coerce ``t`` to a contiguous int64 array, optionally verifying order."""
    arr = np.ascontiguousarray(t)
    if arr.ndim != 1:
        raise ValueError(f"{name} must be one-dimensional, got shape {arr.shape}")
    if arr.size and arr.dtype.kind == "f":
        if not np.all(np.isfinite(arr)) or np.any(arr != np.rint(arr)):
            raise ValueError(f"{name} must hold integer picosecond timestamps")
    arr = arr.astype(np.int64, copy=False)
    if check_sorted and arr.size > 1:
        bad = np.flatnonzero(np.diff(arr) < 0)
        if bad.size:
            i = int(bad[0])
            raise UnsortedInputError(
                f"{name} not sorted: element {i + 1} ({arr[i + 1]}) precedes element {i} ({arr[i]})"
            )
    return arr


def check_positive(value, name, allow_zero=False):
    v = float(value)
    if not math.isfinite(v) or v < 0 or (v == 0 and not allow_zero):
        bound = ">= 0" if allow_zero else "> 0"
        raise ConfigError(name, f"must be finite and {bound}, got {value!r}")
    return v


def check_probability(value, name, low_open=False, high_open=False):
    v = float(value)
    lo_ok = v > 0 if low_open else v >= 0
    hi_ok = v < 1 if high_open else v <= 1
    if not (math.isfinite(v) and lo_ok and hi_ok):
        lo = "(0" if low_open else "[0"
        hi = "1)" if high_open else "1]"
        raise ConfigError(name, f"must lie in {lo}, {hi}, got {value!r}")
    return v


def check_int(value, name, minimum=None):
    if isinstance(value, bool) or not isinstance(value, (int, np.integer)):
        if isinstance(value, float) and value.is_integer():
            value = int(value)
        else:
            raise ConfigError(name, f"must be an integer, got {value!r}")
    value = int(value)
    if minimum is not None and value < minimum:
        raise ConfigError(name, f"must be >= {minimum}, got {value}")
    return value
