"""Fixed-point stability toolkit.

Closed-form spectra of the rule flows linearized at every eigenpair fixed point, a
finite-difference Jacobian oracle to cross-check them, the bordered-Hessian spectrum
that motivates using a Newton descent in the first place, and a random-perturbation
probe for the one regime where linearization is undefined.

Classification convention: a fixed point is an ``attractor`` when every eigenvalue
real part is below -1e-9, a ``saddle`` when real parts of both signs (beyond 1e-9)
are present, and ``indeterminate`` otherwise.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .exceptions import (
    ConvergenceError,
    DegenerateInputError,
    DimensionError,
    SingularityError,
)
from .linmodel import SpectralModel, deflate
from .rules import SINGULARITY_EPS
from .validation import as_matrix, check_index, check_spectrum

__all__ = [
    "SpectrumReport",
    "PerturbationReport",
    "classify_eigenvalues",
    "numeric_jacobian",
    "packed_stage_rhs",
    "eigenvalues_general",
    "match_eigenvalue_sets",
    "principal_spectrum",
    "arbitrary_spectrum",
    "exact_hessian_cross_spectrum",
    "bordered_hessian_spectrum",
    "bordered_hessian_matrix",
    "cross_jacobian_matrix",
    "perturbation_probe",
    "perturbation_scalar_product",
]

#: real parts smaller than this in magnitude are treated as zero when classifying
REAL_PART_TOL = 1e-9

ATTRACTOR = "attractor"
SADDLE = "saddle"
INDETERMINATE = "indeterminate"


def classify_eigenvalues(eigenvalues, tol: float = REAL_PART_TOL) -> str:
    re = np.real(np.asarray(eigenvalues, dtype=complex))
    if re.size == 0:
        return INDETERMINATE
    has_pos = bool(np.any(re > tol))
    has_neg = bool(np.any(re < -tol))
    if has_pos and has_neg:
        return SADDLE
    if has_neg and np.all(re < -tol):
        return ATTRACTOR
    return INDETERMINATE


def _complex_to_dict(z: complex) -> dict:
    return {"re": float(z.real), "im": float(z.imag)}


@dataclass(frozen=True)
class SpectrumReport:
    """Eigenvalues of a linearization plus their stability classification.

    ``withdrawn_eigenvalues`` is only populated for the one case whose
    linearization is invalid; those values are kept for documentation and must not
    be read as a stability statement (the classification stays indeterminate and
    defers to :func:`perturbation_probe`).
    """

    eigenvalues: tuple
    classification: str
    source: str
    note: str | None = None
    withdrawn_eigenvalues: tuple | None = None

    def to_dict(self) -> dict:
        out = {
            "eigenvalues": [_complex_to_dict(z) for z in self.eigenvalues],
            "classification": self.classification,
            "source": self.source,
        }
        if self.note is not None:
            out["note"] = self.note
        if self.withdrawn_eigenvalues is not None:
            out["withdrawn_eigenvalues"] = [
                _complex_to_dict(z) for z in self.withdrawn_eigenvalues
            ]
        return out


@dataclass(frozen=True)
class PerturbationReport:
    """Sign statistics of perturbation/flow inner products around a fixed point."""

    trials: int
    positive_count: int
    max_scalar_product: float
    min_scalar_product: float
    resamples: int = 0

    def __post_init__(self):
        if not 0 <= self.positive_count <= self.trials:
            raise DimensionError("positive_count must lie in [0, trials]")

    def to_dict(self) -> dict:
        return {
            "trials": self.trials,
            "positive_count": self.positive_count,
            "max_scalar_product": self.max_scalar_product,
            "min_scalar_product": self.min_scalar_product,
            "resamples": self.resamples,
        }


def _analytic_report(values, note=None, withdrawn=None, classification=None) -> SpectrumReport:
    values = tuple(complex(v) for v in values)
    return SpectrumReport(
        eigenvalues=values,
        classification=classification or classify_eigenvalues(values),
        source="analytic",
        note=note,
        withdrawn_eigenvalues=None if withdrawn is None else tuple(complex(v) for v in withdrawn),
    )


# ---------------------------------------------------------------------------
# numeric backends
# ---------------------------------------------------------------------------


def numeric_jacobian(f, x, h: float = 1e-6) -> np.ndarray:
    """Central-difference Jacobian of a vector map at x (exact for linear maps)."""
    x = np.asarray(x, dtype=float)
    cols = []
    for j in range(x.shape[0]):
        e = np.zeros_like(x)
        e[j] = h
        cols.append((np.asarray(f(x + e)) - np.asarray(f(x - e))) / (2.0 * h))
    return np.column_stack(cols)


def packed_stage_rhs(rhs):
    """Adapt an ``rhs(w, l) -> (wdot, ldot)`` callable to packed-vector form."""

    def f(x):
        wdot, ldot = rhs(x[:-1], float(x[-1]))
        return np.append(wdot, ldot)

    return f


def eigenvalues_general(A) -> np.ndarray:
    """Complex eigenvalues of a general square matrix, sorted by (re, im)."""
    A = as_matrix(A, "A")
    if not np.all(np.isfinite(A)):
        raise DegenerateInputError("A must have finite entries")
    try:
        values = np.linalg.eigvals(A)
    except np.linalg.LinAlgError as exc:
        raise ConvergenceError(f"eigenvalue iteration failed: {exc}") from exc
    return np.sort_complex(values)


def match_eigenvalue_sets(a, b) -> float:
    """Greedy pairing distance between two eigenvalue multisets.

    Both sets are sorted by (re, im), then each value of the first is paired with
    the nearest not-yet-used value of the second (so ties in real part cannot
    cross-match a real value with a complex one).  Returns the largest pairwise
    distance; raises if the sets differ in size.
    """
    a = np.sort_complex(np.asarray(a, dtype=complex))
    b = np.sort_complex(np.asarray(b, dtype=complex))
    if a.shape != b.shape:
        raise DimensionError(f"cannot pair {a.shape[0]} with {b.shape[0]} eigenvalues")
    if a.size == 0:
        return 0.0
    used = np.zeros(b.shape[0], dtype=bool)
    worst = 0.0
    for z in a:
        dist = np.abs(b - z)
        dist[used] = np.inf
        k = int(np.argmin(dist))
        used[k] = True
        worst = max(worst, float(dist[k]))
    return worst


# ---------------------------------------------------------------------------
# closed-form spectra
# ---------------------------------------------------------------------------


def principal_spectrum(lambdas, q: int) -> SpectrumReport:
    """Spectrum of the principal-rule flow linearized at eigenpair q.

    Values are (lam_k - lam_q) / lam_q for k != q plus a double -1, so only q = 1
    is an attractor and convergence speed near it approaches -1 from every
    direction once trailing eigenvalues are comparatively small.
    """
    lam = check_spectrum(lambdas)
    n = lam.shape[0]
    q = check_index(q, n, "q")
    lam_q = lam[q - 1]
    values = [(lam[k] - lam_q) / lam_q if k != q - 1 else -1.0 for k in range(n)]
    values.append(-1.0)
    return _analytic_report(values)


def arbitrary_spectrum(lambdas, p: int, q: int) -> SpectrumReport:
    """Spectrum of the stage-p rule flow linearized at eigenpair q.

    q = p is an attractor and q > p a saddle.  For q < p the linearization is
    invalid (a gap term in the flow is undefined at that very point), so the
    report is indeterminate and defers to :func:`perturbation_probe`; the values
    a naive linearization would give are attached as ``withdrawn_eigenvalues``.
    """
    lam = check_spectrum(lambdas)
    n = lam.shape[0]
    p = check_index(p, n, "p")
    q = check_index(q, n, "q")
    lam_q = lam[q - 1]

    if q >= p:
        values = []
        for k in range(1, n + 1):
            if k < p or k == q:
                values.append(-1.0)
            else:
                values.append(lam[k - 1] / lam_q - 1.0)
        values.append(-1.0)
        return _analytic_report(values)

    withdrawn = []
    for k in range(1, n + 1):
        if k == q:
            withdrawn.append(-2.0)
        elif k < p:
            withdrawn.append(-1.0)
        else:
            withdrawn.append(lam[k - 1] / lam_q - 1.0)
    withdrawn.append(-1.0)
    return SpectrumReport(
        eigenvalues=(),
        classification=INDETERMINATE,
        source="analytic",
        note=(
            "linearization invalid for fixed points preceding the stage; "
            "classification deferred to perturbation_probe"
        ),
        withdrawn_eigenvalues=tuple(complex(v) for v in withdrawn),
    )


def exact_hessian_cross_spectrum(lambdas, i: int, j: int) -> SpectrumReport:
    """Spectrum of the Newton flow with the exact Hessian of fixed point i, linearized at j.

    For i = j every eigenvalue is -1.  Otherwise the spectrum is the three cube
    roots of unity plus -(lam_k - lam_j) / (lam_k - lam_i) for the remaining k,
    always a saddle, independent of the eigenvalue spectrum.
    """
    lam = check_spectrum(lambdas)
    n = lam.shape[0]
    i = check_index(i, n, "i")
    j = check_index(j, n, "j")
    if i == j:
        return _analytic_report([-1.0] * (n + 1))
    half_sqrt3 = math.sqrt(3.0) / 2.0
    values = [1.0 + 0.0j, complex(-0.5, half_sqrt3), complex(-0.5, -half_sqrt3)]
    for k in range(1, n + 1):
        if k in (i, j):
            continue
        values.append(-(lam[k - 1] - lam[j - 1]) / (lam[k - 1] - lam[i - 1]))
    return _analytic_report(values)


def bordered_hessian_spectrum(lambdas, p: int) -> SpectrumReport:
    """Spectrum of the constrained criterion's own Hessian at eigenpair p.

    Contains both -1 and +1 for every p, so plain gradient flows (either sign)
    never converge; this is what the Newton descent fixes.
    """
    lam = check_spectrum(lambdas)
    n = lam.shape[0]
    p = check_index(p, n, "p")
    values = [lam[k] - lam[p - 1] if k != p - 1 else -1.0 for k in range(n)]
    values.append(1.0)
    return _analytic_report(values)


def bordered_hessian_matrix(lambdas, p: int) -> np.ndarray:
    """Assemble [[diag(lam) - lam_p I, -e_p], [-e_p^T, 0]] in the eigenbasis."""
    lam = check_spectrum(lambdas)
    n = lam.shape[0]
    p = check_index(p, n, "p")
    H = np.zeros((n + 1, n + 1))
    H[:n, :n] = np.diag(lam - lam[p - 1])
    H[p - 1, n] = -1.0
    H[n, p - 1] = -1.0
    return H


def cross_jacobian_matrix(lambdas, i: int, j: int) -> np.ndarray:
    """Numerically assemble -H_i^{-1} H_j from the two fixed-point Hessians."""
    Hi = bordered_hessian_matrix(lambdas, i)
    Hj = bordered_hessian_matrix(lambdas, j)
    return -np.linalg.solve(Hi, Hj)


# ---------------------------------------------------------------------------
# perturbation probe
# ---------------------------------------------------------------------------


def _batch_flow_principal(C, W, ls):
    CW = W @ C
    wCw = np.einsum("ti,ti->t", W, CW)
    ww = np.einsum("ti,ti->t", W, W)
    Wdot = (CW - wCw[:, None] * W) / ls[:, None] + 0.5 * (ww - 1.0)[:, None] * W
    Ldot = wCw - ls * ww
    return Wdot, Ldot


def _batch_flow_arbitrary(C, prev_rows, prev_values, W, ls):
    Wdot, Ldot = _batch_flow_principal(C, W, ls)
    if prev_values.size:
        residual = W @ C - ls[:, None] * W
        proj = residual @ prev_rows.T
        coefs = 1.0 / (prev_values[None, :] - ls[:, None]) + 1.0 / ls[:, None]
        Wdot = Wdot - (coefs * proj) @ prev_rows
    return Wdot, Ldot


def _probe_flow(model: SpectralModel, rule: str, p: int):
    """Batched stage-p flow with the preceding pairs pinned to the true ones."""
    C = model.covariance
    prev_rows = model.eigenvectors[:, : p - 1].T
    prev_values = model.eigenvalues[: p - 1]
    if rule == "principal":
        if p != 1:
            raise DimensionError("principal rule only defines stage 1")
        return lambda W, ls: _batch_flow_principal(C, W, ls), prev_values
    if rule == "deflation":
        Cd = deflate(C, model.pairs(p - 1))
        return lambda W, ls: _batch_flow_principal(Cd, W, ls), prev_values
    if rule == "arbitrary":
        return (
            lambda W, ls: _batch_flow_arbitrary(C, prev_rows, prev_values, W, ls),
            prev_values,
        )
    raise ValueError(f"unknown rule kind {rule!r}")


def _guard_mask(ls, prev_values):
    ok = np.abs(ls) >= SINGULARITY_EPS
    for lam in prev_values:
        ok &= np.abs(lam - ls) >= SINGULARITY_EPS
    return ok


def perturbation_probe(model: SpectralModel, rule: str, p: int, q: int,
                       trials: int, eps_scale: float, seed: int) -> PerturbationReport:
    """Sample small displacements around true eigenpair q and probe the stage-p flow.

    Each trial draws an eigenvector offset uniformly from the ball of radius
    ``eps_scale`` and a multiplier offset uniformly from [-eps_scale, eps_scale],
    evaluates the flow at the displaced state (preceding pairs pinned to truth),
    and records the inner product between displacement and flow.  A never-positive
    product witnesses attraction; any positive product witnesses escape
    directions.  Draws violating the flow's singularity guards are redrawn and
    counted in ``resamples``.
    """
    if trials < 1:
        raise DimensionError("trials must be at least 1")
    if eps_scale <= 0.0:
        raise DimensionError("eps_scale must be positive")
    n = model.n
    p = check_index(p, n, "p")
    q = check_index(q, n, "q")
    flow, prev_values = _probe_flow(model, rule, p)
    v_q = model.eigenvectors[:, q - 1]
    lam_q = model.eigenvalues[q - 1]

    rng = np.random.default_rng(seed)

    def draw(count):
        direction = rng.standard_normal((count, n))
        direction /= np.linalg.norm(direction, axis=1, keepdims=True)
        radius = eps_scale * rng.uniform(0.0, 1.0, size=count) ** (1.0 / n)
        mu = direction * radius[:, None]
        nu = rng.uniform(-eps_scale, eps_scale, size=count)
        return mu, nu

    mu, nu = draw(trials)
    resamples = 0
    for _ in range(1000):
        bad = ~_guard_mask(lam_q + nu, prev_values)
        count = int(bad.sum())
        if count == 0:
            break
        resamples += count
        mu[bad], nu[bad] = draw(count)
    else:
        raise ConvergenceError("could not sample admissible perturbations")

    W = v_q[None, :] + mu
    ls = lam_q + nu
    Wdot, Ldot = flow(W, ls)
    products = np.einsum("ti,ti->t", mu, Wdot) + nu * Ldot
    return PerturbationReport(
        trials=trials,
        positive_count=int(np.sum(products > 0.0)),
        max_scalar_product=float(np.max(products)),
        min_scalar_product=float(np.min(products)),
        resamples=resamples,
    )


def perturbation_scalar_product(model: SpectralModel, rule: str, p: int, q: int,
                                mu, nu: float) -> float:
    """Inner product between one displacement (mu, nu) and the resulting flow."""
    n = model.n
    p = check_index(p, n, "p")
    q = check_index(q, n, "q")
    mu = np.asarray(mu, dtype=float).reshape(1, n)
    flow, prev_values = _probe_flow(model, rule, p)
    ls = np.array([model.eigenvalues[q - 1] + float(nu)])
    if not np.all(_guard_mask(ls, prev_values)):
        raise SingularityError("displacement violates the flow's singularity guards")
    W = model.eigenvectors[:, q - 1][None, :] + mu
    Wdot, Ldot = flow(W, ls)
    return float(mu[0] @ Wdot[0] + float(nu) * Ldot[0])
