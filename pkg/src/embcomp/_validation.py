"""Input validation helpers shared by the estimators and functional API."""

import numpy as np
from sklearn.utils.validation import check_array


class ValidationError(ValueError):
    """Input data does not satisfy a table or array contract."""


class NumericalError(ArithmeticError):
    """A computation produced a non-finite or degenerate result."""


def as_matrix(X, name="X", *, min_rows=1, allow_1d=False):
    """Return ``X`` as a finite float64 2-D array.

    1-D input is promoted to a single column when ``allow_1d`` is set.
    """
    arr = np.asarray(X, dtype=np.float64)
    if arr.ndim == 1 and allow_1d:
        arr = arr[:, None]
    try:
        arr = check_array(
            arr,
            dtype=np.float64,
            ensure_2d=True,
            ensure_min_samples=min_rows,
            ensure_all_finite=True,
            input_name=name,
        )
    except ValueError as exc:
        raise ValidationError(str(exc)) from exc
    return arr


def as_vector(x, name="x", *, min_len=1):
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim != 1:
        raise ValidationError(f"{name} must be 1-D, got shape {arr.shape}")
    if arr.size < min_len:
        raise ValidationError(f"{name} needs at least {min_len} entries, got {arr.size}")
    if not np.all(np.isfinite(arr)):
        raise ValidationError(f"{name} contains non-finite entries")
    return arr


def check_same_rows(*arrays, names=None):
    lengths = [a.shape[0] for a in arrays]
    if len(set(lengths)) > 1:
        label = ", ".join(names) if names else "inputs"
        raise ValidationError(f"row counts differ across {label}: {lengths}")
    return lengths[0]


def check_positive(value, name):
    value = float(value)
    if not np.isfinite(value) or value <= 0:
        raise ValidationError(f"{name} must be a positive finite number, got {value}")
    return value
