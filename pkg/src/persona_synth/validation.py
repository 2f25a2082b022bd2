"""Input validation helpers shared by the estimators and aggregation code."""

from __future__ import annotations

import numpy as np

from .errors import ValidationError

UNIT_SUM_TOL = 1e-9


def as_float_array(values, what: str) -> np.ndarray:
    try:
        arr = np.asarray(values, dtype=float)
    except (TypeError, ValueError) as exc:
        raise ValidationError(f"{what}: not numeric") from exc
    if not np.all(np.isfinite(arr)):
        raise ValidationError(f"{what}: contains NaN or infinity")
    return arr


def check_probability_vector(values, what: str, tol: float = UNIT_SUM_TOL) -> np.ndarray:
    """Validate a 1-d probability vector: non-negative, sums to 1 within tol."""
    arr = as_float_array(values, what)
    if arr.ndim != 1:
        raise ValidationError(f"{what}: expected a 1-d vector, got shape {arr.shape}")
    if np.any(arr < 0):
        raise ValidationError(f"{what}: negative share {arr.min():.6g}")
    total = float(arr.sum())
    if abs(total - 1.0) > tol:
        raise ValidationError(f"{what}: shares sum to {total!r}, expected 1 within {tol:g}")
    return arr


def check_probability_rows(matrix, what: str, tol: float = UNIT_SUM_TOL) -> np.ndarray:
    """Validate a 2-d array whose rows are each probability vectors."""
    arr = as_float_array(matrix, what)
    if arr.ndim != 2:
        raise ValidationError(f"{what}: expected a 2-d array, got shape {arr.shape}")
    if np.any(arr < 0):
        raise ValidationError(f"{what}: negative share {arr.min():.6g}")
    sums = arr.sum(axis=1)
    worst = int(np.argmax(np.abs(sums - 1.0)))
    if abs(sums[worst] - 1.0) > tol:
        raise ValidationError(
            f"{what}: row {worst} sums to {sums[worst]!r}, expected 1 within {tol:g}"
        )
    return arr


def check_same_labels(left, right, what: str) -> None:
    if tuple(left) != tuple(right):
        raise ValidationError(f"{what}: label mismatch: {tuple(left)} != {tuple(right)}")


def check_positive(value: float, what: str) -> float:
    if not value > 0:
        raise ValidationError(f"{what} must be positive, got {value!r}")
    return value


def check_non_negative(value: float, what: str) -> float:
    if value < 0:
        raise ValidationError(f"{what} must be >= 0, got {value!r}")
    return value


def check_at_least(value: int, minimum: int, what: str) -> int:
    if value < minimum:
        raise ValidationError(f"{what} must be >= {minimum}, got {value!r}")
    return value
