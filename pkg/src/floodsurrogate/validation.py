"""Input validation helpers.

Small check functions used at module boundaries so the numerical code can
assume clean inputs. All of them raise :class:`DimensionError` (a
``ValueError``) with both offending shapes in the message.
"""

import numpy as np

from .errors import DimensionError

__all__ = [
    "as_float_array",
    "check_2d",
    "check_grid",
    "check_length",
    "check_positive",
    "check_same_shape",
    "check_vector",
]


def as_float_array(x, name="array", dtype=np.float64):
    """Coerce to a numpy float array, rejecting non-numeric input."""
    try:
        arr = np.asarray(x, dtype=dtype)
    except (TypeError, ValueError) as exc:
        raise DimensionError(f"{name} must be numeric, got {type(x).__name__}") from exc
    return arr


def check_2d(x, name="array", cols=None):
    """Require a 2-D array, optionally with a fixed column count."""
    arr = as_float_array(x, name)
    if arr.ndim != 2:
        raise DimensionError(f"{name} must be 2-D, got shape {arr.shape}")
    if cols is not None and arr.shape[1] != cols:
        raise DimensionError(f"{name} must have {cols} columns, got shape {arr.shape}")
    return arr


def check_vector(x, name="vector", length=None):
    """Require a 1-D array, optionally of a fixed length."""
    arr = as_float_array(x, name)
    if arr.ndim != 1:
        raise DimensionError(f"{name} must be 1-D, got shape {arr.shape}")
    if length is not None and arr.shape[0] != length:
        raise DimensionError(f"{name} must have length {length}, got {arr.shape[0]}")
    return arr


def check_same_shape(a, b, name_a="a", name_b="b"):
    if np.shape(a) != np.shape(b):
        raise DimensionError(
            f"{name_a} and {name_b} must have equal shapes, got {np.shape(a)} vs {np.shape(b)}"
        )


def check_length(a, b, name_a="a", name_b="b"):
    if len(a) != len(b):
        raise DimensionError(
            f"{name_a} and {name_b} must have equal lengths, got {len(a)} vs {len(b)}"
        )


def check_grid(arr, rows, cols, name="grid"):
    """Require a 2-D array of exactly (rows, cols)."""
    arr = as_float_array(arr, name)
    if arr.shape != (rows, cols):
        raise DimensionError(f"{name} must have shape ({rows}, {cols}), got {arr.shape}")
    return arr


def check_positive(value, name="value", strict=True):
    if strict and not value > 0:
        raise DimensionError(f"{name} must be > 0, got {value}")
    if not strict and not value >= 0:
        raise DimensionError(f"{name} must be >= 0, got {value}")
    return value
