"""Derivatives of the constrained-variance criterion and the coupled learning-rule flows.

The criterion is J = w.C w / 2 - l (w.w - 1) / 2, with the multiplier l doubling as
the eigenvalue estimate.  Its stationary points are exactly the unit eigenpairs of C,
and every flow below is a Newton descent on J with a closed-form approximate inverse
Hessian, so eigenvector and eigenvalue estimates evolve in one coupled system.

All functions are pure and operate on plain numpy arrays.  Stage and eigenpair
indices count from 1.  Scalars that the formulas invert (l, and gaps l_i - l_p) are
guarded by ``SINGULARITY_EPS``; violations raise :class:`SingularityError` instead of
producing infinities.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exceptions import DimensionError, SingularityError, SpectrumError
from .validation import as_matrix, as_vector, check_finite, check_index

__all__ = [
    "SINGULARITY_EPS",
    "EigenState",
    "ChainState",
    "lagrange_value",
    "lagrange_gradient",
    "lagrange_hessian",
    "transformed_hessian",
    "inv_hessian_principal",
    "inv_hessian_arbitrary",
    "rhs_principal",
    "rhs_deflated",
    "rhs_deflated_matrix",
    "rhs_arbitrary",
    "stage_rhs",
    "online_rhs",
    "sut",
]

#: magnitude below which an inverted scalar is treated as singular
SINGULARITY_EPS = 1e-12


@dataclass(frozen=True)
class EigenState:
    """One eigenvector estimate w plus its multiplier/eigenvalue estimate l."""

    w: np.ndarray
    l: float

    def __post_init__(self):
        w = check_finite(as_vector(self.w, name="w"), "w")
        l = float(self.l)
        if not np.isfinite(l):
            raise DimensionError("l must be finite")
        object.__setattr__(self, "w", w)
        object.__setattr__(self, "l", l)

    @property
    def n(self) -> int:
        return self.w.shape[0]

    def packed(self) -> np.ndarray:
        """Concatenate (w, l) into one extended vector."""
        return np.append(self.w, self.l)

    @classmethod
    def from_packed(cls, x) -> "EigenState":
        x = as_vector(x, name="packed state")
        return cls(x[:-1], float(x[-1]))


@dataclass(frozen=True)
class ChainState:
    """Stacked estimates for m eigenpairs: columns of W paired with entries of L."""

    W: np.ndarray
    L: np.ndarray

    def __post_init__(self):
        W = np.asarray(self.W, dtype=float)
        L = as_vector(self.L, name="L")
        if W.ndim != 2:
            raise DimensionError(f"W must be a matrix, got shape {W.shape}")
        n, m = W.shape
        if L.shape[0] != m:
            raise DimensionError(f"L must have one entry per column of W ({m})")
        if m > n:
            raise DimensionError(f"cannot stack more estimates than dimensions ({m} > {n})")
        check_finite(W, "W")
        check_finite(L, "L")
        object.__setattr__(self, "W", W)
        object.__setattr__(self, "L", L)

    @property
    def n(self) -> int:
        return self.W.shape[0]

    @property
    def m(self) -> int:
        return self.W.shape[1]

    def stage(self, p: int) -> EigenState:
        """Estimate of stage ``p`` (1-based)."""
        p = check_index(p, self.m, "p")
        return EigenState(self.W[:, p - 1], self.L[p - 1])


def _guard(value: float, name: str) -> float:
    if abs(value) < SINGULARITY_EPS:
        raise SingularityError(f"{name} = {value!r} is within {SINGULARITY_EPS:.0e} of zero")
    return float(value)


def _known_arrays(known, n: int, require_descending: bool):
    """Unpack preceding (vector, value) pairs into a (k, n) row matrix and values."""
    vectors = []
    values = []
    for idx, pair in enumerate(known):
        vec = getattr(pair, "vector", None)
        val = getattr(pair, "value", None)
        if vec is None:
            vec, val = pair
        vectors.append(as_vector(vec, n, name=f"known[{idx}].vector"))
        values.append(float(val))
    values = np.asarray(values)
    if require_descending and values.size > 1 and np.any(np.diff(values) >= 0.0):
        raise SpectrumError("known eigenvalues must be strictly descending")
    rows = np.array(vectors) if vectors else np.zeros((0, n))
    return rows, values


# ---------------------------------------------------------------------------
# criterion, gradient, Hessians
# ---------------------------------------------------------------------------


def lagrange_value(C, state: EigenState) -> float:
    """J = w.C w / 2 - l (w.w - 1) / 2."""
    C = as_matrix(C, "C")
    w = as_vector(state.w, C.shape[0], "w")
    return 0.5 * float(w @ C @ w) - 0.5 * state.l * (float(w @ w) - 1.0)


def lagrange_gradient(C, state: EigenState) -> np.ndarray:
    """Extended gradient (C w - l w, -(w.w - 1) / 2); zero exactly at unit eigenpairs."""
    C = as_matrix(C, "C")
    w = as_vector(state.w, C.shape[0], "w")
    g = np.empty(w.shape[0] + 1)
    g[:-1] = C @ w - state.l * w
    g[-1] = -0.5 * (float(w @ w) - 1.0)
    return g


def lagrange_hessian(C, state: EigenState) -> np.ndarray:
    """Extended Hessian [[C - l I, -w], [-w^T, 0]]."""
    C = as_matrix(C, "C")
    w = as_vector(state.w, C.shape[0], "w")
    n = w.shape[0]
    H = np.zeros((n + 1, n + 1))
    H[:n, :n] = C - state.l * np.eye(n)
    H[:n, n] = -w
    H[n, :n] = -w
    return H


def transformed_hessian(model, state: EigenState) -> np.ndarray:
    """Extended Hessian rotated into the true eigenbasis: [[diag(lam) - l I, -V^T w], [.., 0]]."""
    n = model.n
    w = as_vector(state.w, n, "w")
    b = model.eigenvectors.T @ w
    H = np.zeros((n + 1, n + 1))
    H[:n, :n] = np.diag(model.eigenvalues - state.l)
    H[:n, n] = -b
    H[n, :n] = -b
    return H


def inv_hessian_principal(state: EigenState) -> np.ndarray:
    """Closed-form approximate inverse Hessian near the top eigenpair.

    [[ (w w^T - I) / l, -w], [-w^T, 0]]; valid in the regime where all trailing
    eigenvalues are much smaller than the leading one.
    """
    l = _guard(state.l, "l")
    w = state.w
    n = w.shape[0]
    H = np.zeros((n + 1, n + 1))
    H[:n, :n] = (np.outer(w, w) - np.eye(n)) / l
    H[:n, n] = -w
    H[n, :n] = -w
    return H


def inv_hessian_arbitrary(state: EigenState, known) -> np.ndarray:
    """Closed-form approximate inverse Hessian for stage p with p-1 known pairs.

    Top-left block: sum_i ((lam_i - l)^-1 + l^-1) v_i v_i^T + w w^T / l - I / l,
    summed over the known preceding pairs; border -w.  Reduces to
    :func:`inv_hessian_principal` when ``known`` is empty.
    """
    l = _guard(state.l, "l")
    w = state.w
    n = w.shape[0]
    rows, values = _known_arrays(known, n, require_descending=True)
    coefs = np.empty(values.shape[0])
    for i, lam in enumerate(values):
        gap = _guard(lam - l, f"lam_{i + 1} - l")
        coefs[i] = 1.0 / gap + 1.0 / l
    H = np.zeros((n + 1, n + 1))
    H[:n, :n] = (rows.T * coefs) @ rows + np.outer(w, w) / l - np.eye(n) / l
    H[:n, n] = -w
    H[n, :n] = -w
    return H


# ---------------------------------------------------------------------------
# flows (learning rules)
# ---------------------------------------------------------------------------


def _principal_flow(C, w, l):
    Cw = C @ w
    wCw = float(w @ Cw)
    ww = float(w @ w)
    wdot = (Cw - wCw * w) / l + 0.5 * (ww - 1.0) * w
    ldot = wCw - l * ww
    return wdot, ldot


def _deflated_flow(C, w, l, prev_rows, prev_values):
    Cw = C @ w
    proj = prev_rows @ w
    removed = prev_rows.T @ (prev_values * proj)
    wCw = float(w @ Cw)
    wDw = float(w @ removed)
    ww = float(w @ w)
    wdot = (Cw - removed - wCw * w + wDw * w) / l + 0.5 * (ww - 1.0) * w
    ldot = wCw - wDw - l * ww
    return wdot, ldot


def _arbitrary_flow(C, w, l, prev_rows, prev_values):
    Cw = C @ w
    wCw = float(w @ Cw)
    ww = float(w @ w)
    residual = Cw - l * w
    coefs = 1.0 / (prev_values - l) + 1.0 / l
    correction = prev_rows.T @ (coefs * (prev_rows @ residual))
    wdot = (Cw - wCw * w) / l + 0.5 * (ww - 1.0) * w - correction
    ldot = wCw - l * ww
    return wdot, ldot


def rhs_principal(C, state: EigenState) -> np.ndarray:
    """Flow towards the top eigenpair, packed as one (n+1)-vector (wdot, ldot).

    wdot = (C w - [w.C w] w) / l + (w.w - 1) w / 2
    ldot = w.C w - l w.w

    Besides the eigenpairs of C, w = 0 is a fixed point for any admissible l.
    """
    C = as_matrix(C, "C")
    w = as_vector(state.w, C.shape[0], "w")
    l = _guard(state.l, "l")
    wdot, ldot = _principal_flow(C, w, l)
    return np.append(wdot, ldot)


def rhs_deflated(C, chain: ChainState, p: int):
    """Stage-p flow of the deflation chain, as a ``(wdot, ldot)`` pair.

    Algebraically identical to :func:`rhs_principal` applied to C with the first
    p-1 estimated pairs removed, but evaluated in expanded form so the deflated
    matrix is never materialized.
    """
    C = as_matrix(C, "C")
    p = check_index(p, chain.m, "p")
    if chain.n != C.shape[0]:
        raise DimensionError("chain dimension does not match C")
    w = chain.W[:, p - 1]
    l = _guard(chain.L[p - 1], "l_p")
    prev_rows = chain.W[:, : p - 1].T
    prev_values = chain.L[: p - 1]
    return _deflated_flow(C, w, l, prev_rows, prev_values)


def rhs_deflated_matrix(C, chain: ChainState):
    """All m deflation-chain stages at once, as ``(Wdot, Ldot)``.

    Uses the strictly-upper-triangular form of the pairwise overlaps so that column
    p reproduces :func:`rhs_deflated` for stage p exactly.
    """
    C = as_matrix(C, "C")
    if chain.n != C.shape[0]:
        raise DimensionError("chain dimension does not match C")
    W, L = chain.W, chain.L
    for i, l in enumerate(L):
        _guard(l, f"l_{i + 1}")
    G = W.T @ W
    S = np.triu(G, 1)
    CW = C @ W
    LS = L[:, None] * S
    diag_cov = np.einsum("ij,ij->j", W, CW)
    diag_mix = np.einsum("ij,ji->i", G * L[None, :], S)
    Wdot = (CW - W @ LS - W * diag_cov + W * diag_mix) / L + 0.5 * W * (np.diag(G) - 1.0)
    Ldot = diag_cov - diag_mix - np.diag(G) * L
    return Wdot, Ldot


def rhs_arbitrary(C, chain: ChainState, p: int):
    """Stage-p flow of the direct (non-deflating) chain, as ``(wdot, ldot)``.

    wdot adds a correction along the preceding estimates,
    - sum_i [ (l_i - l_p)^-1 + l_p^-1 ] w_i w_i^T (C w_p - l_p w_p),
    while ldot keeps the single-pair form w.C w - l w.w.  Requires l_p and every
    gap l_i - l_p to stay away from zero.
    """
    C = as_matrix(C, "C")
    p = check_index(p, chain.m, "p")
    if chain.n != C.shape[0]:
        raise DimensionError("chain dimension does not match C")
    w = chain.W[:, p - 1]
    l = _guard(chain.L[p - 1], "l_p")
    prev_values = chain.L[: p - 1].copy()
    for i, lam in enumerate(prev_values):
        _guard(lam - l, f"l_{i + 1} - l_p")
    prev_rows = chain.W[:, : p - 1].T
    return _arbitrary_flow(C, w, l, prev_rows, prev_values)


def stage_rhs(C, kind: str, known=()):
    """Bind one stage of a rule into an ``rhs(w, l) -> (wdot, ldot)`` callable.

    ``known`` holds the fixed preceding (vector, value) pairs; it must be empty for
    the principal rule.  The returned callable re-checks the singularity guards on
    every evaluation, so integrators can catch :class:`SingularityError` mid-run.
    """
    C = as_matrix(C, "C")
    n = C.shape[0]
    rows, values = _known_arrays(known, n, require_descending=False)
    if kind == "principal":
        if rows.shape[0]:
            raise DimensionError("principal rule takes no preceding pairs")

        def rhs(w, l):
            return _principal_flow(C, w, _guard(l, "l"))

    elif kind == "deflation":

        def rhs(w, l):
            return _deflated_flow(C, w, _guard(l, "l_p"), rows, values)

    elif kind == "arbitrary":

        def rhs(w, l):
            l = _guard(l, "l_p")
            for i, lam in enumerate(values):
                _guard(lam - l, f"l_{i + 1} - l_p")
            return _arbitrary_flow(C, w, l, rows, values)

    else:
        raise ValueError(f"unknown rule kind {kind!r}")
    return rhs


def online_rhs(x, state_or_chain, kind: str, p: int = 1):
    """Evaluate a rule with the covariance replaced by the outer product x x^T.

    This is the single-sample form of each flow; averaging it over data with
    covariance C recovers the matching averaged rule exactly, since every flow is
    linear in C.
    """
    x = as_vector(x, name="x")
    C = np.outer(x, x)
    if kind == "principal":
        return rhs_principal(C, state_or_chain)
    if kind == "deflation":
        return rhs_deflated(C, state_or_chain, p)
    if kind == "arbitrary":
        return rhs_arbitrary(C, state_or_chain, p)
    raise ValueError(f"unknown rule kind {kind!r}")


def sut(A) -> np.ndarray:
    """Strictly upper triangular part of a square matrix (zero on and below the diagonal)."""
    A = as_matrix(A, "A")
    return np.triu(A, 1)
