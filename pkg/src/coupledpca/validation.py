"""Input validation helpers shared by the math modules and the estimator."""

from __future__ import annotations

import numpy as np

from .exceptions import (
    DimensionError,
    DistinctnessError,
    OrthonormalityError,
    SpectrumError,
    SymmetryError,
)

#: relative gap below which two eigenvalues count as duplicates
DISTINCTNESS_RTOL = 1e-12


def as_matrix(A, name: str = "matrix") -> np.ndarray:
    """Coerce to a square float matrix."""
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise DimensionError(f"{name} must be square, got shape {A.shape}")
    return A


def as_vector(w, n: int | None = None, name: str = "vector") -> np.ndarray:
    """Coerce to a 1-d float vector, optionally of fixed length."""
    w = np.asarray(w, dtype=float)
    if w.ndim != 1:
        raise DimensionError(f"{name} must be one-dimensional, got shape {w.shape}")
    if n is not None and w.shape[0] != n:
        raise DimensionError(f"{name} must have length {n}, got {w.shape[0]}")
    return w


def check_finite(x, name: str = "input") -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(x)):
        raise DimensionError(f"{name} must have finite entries")
    return x


def check_symmetric(C, tol: float = 1e-8, name: str = "matrix") -> np.ndarray:
    C = as_matrix(C, name)
    dev = float(np.max(np.abs(C - C.T))) if C.size else 0.0
    if dev >= tol:
        raise SymmetryError(
            f"{name} deviates from symmetry by {dev:.3e} (tolerance {tol:.0e})"
        )
    return C


def check_spectrum(values, min_len: int = 2) -> np.ndarray:
    """Validate a strictly descending, positive, well-separated eigenvalue sequence."""
    values = np.asarray(values, dtype=float)
    if values.ndim != 1 or values.shape[0] < min_len:
        raise DimensionError(
            f"need at least {min_len} eigenvalues, got shape {values.shape}"
        )
    if not np.all(np.isfinite(values)):
        raise SpectrumError("eigenvalues must be finite")
    if np.any(values <= 0.0):
        raise SpectrumError("eigenvalues must be positive")
    if np.any(np.diff(values) > 0.0):
        raise SpectrumError("eigenvalues must be sorted in descending order")
    gaps = (values[:-1] - values[1:]) / values[:-1]
    if np.any(gaps < DISTINCTNESS_RTOL):
        raise DistinctnessError(
            f"eigenvalues must be distinct (relative gap >= {DISTINCTNESS_RTOL:.0e})"
        )
    return values


def check_orthonormal_columns(P, tol: float = 1e-6, name: str = "vectors") -> None:
    gram = P.T @ P
    dev = float(np.max(np.abs(gram - np.eye(P.shape[1]))))
    if dev > tol:
        raise OrthonormalityError(
            f"{name} are not orthonormal (Gram deviation {dev:.3e} > {tol:.0e})"
        )


def check_index(value: int, upper: int, name: str) -> int:
    """Validate a 1-based index in [1, upper]."""
    value = int(value)
    if not 1 <= value <= upper:
        raise DimensionError(f"{name} must be in [1, {upper}], got {value}")
    return value
