"""Ground-truth spectral models and the independent reference eigensolver.

Everything downstream (learning rules, integrators, stability analyses) operates on a
:class:`SpectralModel`: a covariance matrix held together with the exact
eigendecomposition it was assembled from.  The Jacobi eigensolver in this module is the
reference path used to cross-check matrices produced anywhere else in the package; it
deliberately shares no code with the iterative rules it validates.

Eigenpair indices count from 1 (largest eigenvalue first) throughout the package.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exceptions import (
    ConvergenceError,
    DegenerateInputError,
    DimensionError,
)
from .validation import (
    as_matrix,
    as_vector,
    check_index,
    check_orthonormal_columns,
    check_spectrum,
    check_symmetric,
)

__all__ = [
    "EigenPair",
    "SpectralModel",
    "make_loglinear_model",
    "model_from_spectrum",
    "model_to_dict",
    "model_from_dict",
    "symmetric_eigen_oracle",
    "rayleigh_quotient",
    "deflate",
]


@dataclass(frozen=True)
class EigenPair:
    """A unit-norm eigenvector together with its eigenvalue."""

    vector: np.ndarray
    value: float

    def __post_init__(self):
        vector = as_vector(self.vector, name="eigenvector")
        object.__setattr__(self, "vector", vector)
        object.__setattr__(self, "value", float(self.value))
        norm = float(np.linalg.norm(vector))
        if abs(norm - 1.0) >= 1e-10:
            raise DegenerateInputError(
                f"eigenvector norm {norm!r} deviates from 1 by more than 1e-10"
            )


@dataclass(frozen=True)
class SpectralModel:
    """A covariance matrix with its exact eigendecomposition.

    ``eigenvectors`` holds unit eigenvectors in columns, ordered by the strictly
    descending positive ``eigenvalues``; ``covariance`` is assembled from them.
    Instances are validated on construction and never mutated.
    """

    n: int
    eigenvectors: np.ndarray
    eigenvalues: np.ndarray
    covariance: np.ndarray

    def __post_init__(self):
        n = int(self.n)
        V = as_matrix(self.eigenvectors, "eigenvectors")
        values = check_spectrum(self.eigenvalues)
        C = as_matrix(self.covariance, "covariance")
        if V.shape != (n, n) or values.shape != (n,) or C.shape != (n, n):
            raise DimensionError("model fields disagree on the dimension n")
        check_orthonormal_columns(V, tol=1e-10, name="eigenvectors")
        check_symmetric(C, tol=1e-12, name="covariance")
        residual = float(np.max(np.abs(C - (V * values) @ V.T)))
        if residual >= 1e-10:
            raise DimensionError(
                f"covariance does not match its eigendecomposition (residual {residual:.3e})"
            )
        object.__setattr__(self, "n", n)
        object.__setattr__(self, "eigenvectors", V)
        object.__setattr__(self, "eigenvalues", values)
        object.__setattr__(self, "covariance", C)

    def pair(self, q: int) -> EigenPair:
        """True eigenpair ``q``, counting from 1 (largest eigenvalue first)."""
        q = check_index(q, self.n, "q")
        return EigenPair(self.eigenvectors[:, q - 1], self.eigenvalues[q - 1])

    def pairs(self, count: int | None = None) -> list[EigenPair]:
        """The leading ``count`` true eigenpairs (all of them by default)."""
        count = self.n if count is None else check_index(count, self.n, "count")
        return [self.pair(q) for q in range(1, count + 1)]


def _orthogonal_from_seed(n: int, seed: int) -> np.ndarray:
    """Orthogonal factor of a seeded Gaussian matrix with a fixed sign convention.

    Each column is flipped so that its largest-magnitude entry is positive, which
    makes generated models reproducible down to the sign of every eigenvector.
    """
    rng = np.random.default_rng(seed)
    Q, _ = np.linalg.qr(rng.standard_normal((n, n)))
    for j in range(n):
        k = int(np.argmax(np.abs(Q[:, j])))
        if Q[k, j] < 0.0:
            Q[:, j] = -Q[:, j]
    return Q


def model_from_spectrum(eigenvalues, seed: int) -> SpectralModel:
    """Build a model with the given spectrum and seeded random eigenvectors."""
    values = check_spectrum(eigenvalues)
    n = values.shape[0]
    V = _orthogonal_from_seed(n, seed)
    C = (V * values) @ V.T
    C = 0.5 * (C + C.T)
    return SpectralModel(n=n, eigenvectors=V, eigenvalues=values, covariance=C)


def make_loglinear_model(n: int, seed: int) -> SpectralModel:
    """Model with log-linear eigenvalues exp(-1), exp(-2), ..., exp(-n)."""
    if n < 2:
        raise DimensionError(f"n must be at least 2, got {n}")
    values = np.exp(-np.arange(1, n + 1, dtype=float))
    return model_from_spectrum(values, seed)


def model_to_dict(model: SpectralModel) -> dict:
    """JSON-ready form of a model; matrices as row-major lists of rows.

    Python's JSON encoder emits shortest round-trip float literals, so a dump/load
    cycle reproduces the model bit for bit.
    """
    return {
        "n": model.n,
        "eigenvalues": model.eigenvalues.tolist(),
        "eigenvectors": model.eigenvectors.tolist(),
        "covariance": model.covariance.tolist(),
    }


def model_from_dict(doc: dict) -> SpectralModel:
    """Rebuild a model from its interchange form, re-validating every invariant."""
    try:
        return SpectralModel(
            n=int(doc["n"]),
            eigenvectors=np.asarray(doc["eigenvectors"], dtype=float),
            eigenvalues=np.asarray(doc["eigenvalues"], dtype=float),
            covariance=np.asarray(doc["covariance"], dtype=float),
        )
    except KeyError as exc:
        raise DimensionError(f"model document is missing field {exc}") from exc


def symmetric_eigen_oracle(C, max_sweeps: int = 100):
    """Eigendecomposition of a symmetric matrix by cyclic Jacobi rotations.

    Serves as the independent reference decomposition for round-trip checks, so it
    uses no LAPACK driver.  Returns ``(eigenvalues, eigenvectors)`` with eigenvalues
    sorted descending and each eigenvector's largest-magnitude component positive.

    Rotations are applied in cyclic sweeps over all upper-triangle positions whose
    magnitude exceeds ``1e-12 * max|C|``; a sweep without rotations ends the
    iteration.  Exceeding ``max_sweeps`` raises :class:`ConvergenceError`.
    """
    C = check_symmetric(C, tol=1e-8, name="C")
    n = C.shape[0]
    A = 0.5 * (C + C.T)
    V = np.eye(n)
    threshold = 1e-12 * float(np.max(np.abs(C))) if C.size else 0.0

    for _ in range(max_sweeps):
        rotated = False
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = A[p, q]
                if abs(apq) <= threshold:
                    continue
                rotated = True
                tau = (A[q, q] - A[p, p]) / (2.0 * apq)
                t = np.sign(tau) if tau != 0.0 else 1.0
                t /= abs(tau) + np.sqrt(1.0 + tau * tau)
                c = 1.0 / np.sqrt(1.0 + t * t)
                s = t * c
                # two-sided rotation in the (p, q) plane
                col_p, col_q = A[:, p].copy(), A[:, q].copy()
                A[:, p] = c * col_p - s * col_q
                A[:, q] = s * col_p + c * col_q
                row_p, row_q = A[p, :].copy(), A[q, :].copy()
                A[p, :] = c * row_p - s * row_q
                A[q, :] = s * row_p + c * row_q
                A[p, q] = 0.0
                A[q, p] = 0.0
                vec_p, vec_q = V[:, p].copy(), V[:, q].copy()
                V[:, p] = c * vec_p - s * vec_q
                V[:, q] = s * vec_p + c * vec_q
        if not rotated:
            break
    else:
        raise ConvergenceError(
            f"Jacobi iteration did not converge within {max_sweeps} sweeps"
        )

    values = np.diag(A).copy()
    order = np.argsort(-values, kind="stable")
    values = values[order]
    V = V[:, order]
    for j in range(n):
        k = int(np.argmax(np.abs(V[:, j])))
        if V[k, j] < 0.0:
            V[:, j] = -V[:, j]
    return values, V


def rayleigh_quotient(C, w) -> float:
    """Half the projected variance per unit squared length: (w.C w) / (2 w.w)."""
    C = as_matrix(C, "C")
    w = as_vector(w, C.shape[0], "w")
    ww = float(w @ w)
    if ww == 0.0:
        raise DegenerateInputError("w must be nonzero")
    return 0.5 * float(w @ C @ w) / ww


def _pairs_to_arrays(pairs, n: int):
    vectors = []
    values = []
    for k, pair in enumerate(pairs):
        if isinstance(pair, EigenPair):
            vec, val = pair.vector, pair.value
        else:
            vec, val = pair
        vectors.append(as_vector(vec, n, name=f"pairs[{k}].vector"))
        values.append(float(val))
    return np.column_stack(vectors), np.asarray(values)


def deflate(C, pairs) -> np.ndarray:
    """Remove the given eigenpairs from C: returns C - sum_i value_i v_i v_i^T.

    The removed directions become zero eigenvalues of the result, leaving the
    remaining spectrum untouched.  ``pairs`` must hold mutually orthonormal
    vectors (as :class:`EigenPair` or plain ``(vector, value)`` tuples).
    """
    C = as_matrix(C, "C")
    pairs = list(pairs)
    if not pairs:
        return C.copy()
    P, values = _pairs_to_arrays(pairs, C.shape[0])
    check_orthonormal_columns(P, tol=1e-6, name="deflation pairs")
    out = C - (P * values) @ P.T
    return 0.5 * (out + out.T)
