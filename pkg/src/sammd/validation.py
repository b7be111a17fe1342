"""Input validation helpers.

All public entry points funnel raw user input through these checks so that
numerical code can assume well-formed float64 arrays.
"""

from __future__ import annotations

import numpy as np

from .exceptions import DimensionError, InvalidInputError, UnequalSampleError


def as_feature_matrix(x, name: str = "X") -> np.ndarray:
    """Coerce to a finite float64 matrix with at least one row and one column."""
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr.reshape(-1, 1)
    if arr.ndim != 2:
        raise DimensionError(f"{name} must be 2-dimensional, got ndim={arr.ndim}")
    if arr.shape[0] < 1 or arr.shape[1] < 1:
        raise InvalidInputError(f"{name} must have at least 1 row and 1 column, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise InvalidInputError(f"{name} contains non-finite entries")
    return np.ascontiguousarray(arr)


def as_vector(x, name: str = "x") -> np.ndarray:
    arr = np.asarray(x, dtype=np.float64).ravel()
    if arr.size < 1:
        raise InvalidInputError(f"{name} must be non-empty")
    if not np.all(np.isfinite(arr)):
        raise InvalidInputError(f"{name} contains non-finite entries")
    return arr


def check_same_dims(x: np.ndarray, y: np.ndarray, what: str = "inputs") -> None:
    if x.shape[-1] != y.shape[-1]:
        raise DimensionError(
            f"{what} have mismatched dimension: {x.shape[-1]} vs {y.shape[-1]}"
        )


def check_paired(x: np.ndarray, y: np.ndarray, what: str = "samples") -> None:
    if x.shape[0] != y.shape[0]:
        raise UnequalSampleError(
            f"{what} must have equal size, got {x.shape[0]} and {y.shape[0]}"
        )


def as_labels(labels, n_rows: int, name: str = "labels") -> np.ndarray:
    arr = np.asarray(labels)
    if arr.ndim != 1 or arr.shape[0] != n_rows:
        raise InvalidInputError(f"{name} must be a length-{n_rows} vector")
    if not np.issubdtype(arr.dtype, np.integer):
        flt = np.asarray(arr, dtype=np.float64)
        if not np.all(flt == np.round(flt)):
            raise InvalidInputError(f"{name} must be integer class indices")
        arr = flt.astype(np.int64)
    if np.any(arr < 0):
        raise InvalidInputError(f"{name} must be non-negative class indices")
    return arr.astype(np.int64)
