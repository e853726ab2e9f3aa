"""Small input-validation helpers shared across the package."""
import numbers

import numpy as np


def check_rng(random_state):
    """Turn ``random_state`` into a :class:`numpy.random.Generator`.

    Accepts ``None``, an integer seed, a ``SeedSequence`` or an existing
    ``Generator`` (returned unchanged).
    """
    if isinstance(random_state, np.random.Generator):
        return random_state
    if random_state is None or isinstance(random_state, (numbers.Integral, np.random.SeedSequence)):
        return np.random.default_rng(random_state)
    raise ValueError(f"{random_state!r} cannot be used to seed a numpy Generator")


def check_times(times, name="times"):
    """Return ``times`` as a 1-D float array, checking it is finite, >= 0 and sorted."""
    arr = np.asarray(times, dtype=float).reshape(-1)
    if arr.size:
        if not np.all(np.isfinite(arr)):
            raise ValueError(f"{name} contains non-finite values")
        if arr[0] < 0:
            raise ValueError(f"{name} contains negative timestamps")
        if np.any(np.diff(arr) < 0):
            raise ValueError(f"{name} must be sorted in non-decreasing order")
    return arr


def check_positive(value, name, strict=True):
    value = float(value)
    if not np.isfinite(value) or (value <= 0 if strict else value < 0):
        bound = "> 0" if strict else ">= 0"
        raise ValueError(f"{name} must be finite and {bound}, got {value}")
    return value


def check_probability(value, name, open_interval=False):
    value = float(value)
    if open_interval:
        ok = 0.0 < value < 1.0
    else:
        ok = 0.0 <= value <= 1.0
    if not ok:
        raise ValueError(f"{name} must lie in {'(0, 1)' if open_interval else '[0, 1]'}, got {value}")
    return value


def check_field(values, name="field"):
    """Validate a 2-D score field of shape ``(X, Y)`` with finite entries."""
    arr = np.asarray(values, dtype=float)
    if arr.ndim != 2:
        raise ValueError(f"{name} must be 2-D with shape (X, Y), got ndim={arr.ndim}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} must contain only finite values")
    return arr
