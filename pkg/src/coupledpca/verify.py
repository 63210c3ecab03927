"""Self-contained invariant suite behind the ``verify`` CLI subcommand.

Runs the same cross-checks the test suite relies on (finite-difference consistency,
fixed-point preservation, the triangular-matrix identities, and every analytic
spectrum against its numeric construction) at a desk scale that finishes in a few
seconds, and reports machine-readable pass/fail results.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .linmodel import make_loglinear_model, model_from_spectrum, symmetric_eigen_oracle
from .rules import (
    ChainState,
    EigenState,
    inv_hessian_principal,
    lagrange_gradient,
    lagrange_hessian,
    lagrange_value,
    rhs_arbitrary,
    rhs_deflated,
    rhs_deflated_matrix,
    rhs_principal,
    stage_rhs,
    sut,
)
from .stability import (
    arbitrary_spectrum,
    bordered_hessian_matrix,
    bordered_hessian_spectrum,
    cross_jacobian_matrix,
    eigenvalues_general,
    exact_hessian_cross_spectrum,
    match_eigenvalue_sets,
    numeric_jacobian,
    packed_stage_rhs,
    principal_spectrum,
)

FD_STEP = 1e-6


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    detail: str

    def to_dict(self) -> dict:
        return {"name": self.name, "passed": self.passed, "detail": self.detail}


def _result(name, worst, tol) -> CheckResult:
    return CheckResult(name, bool(worst < tol), f"worst {worst:.3e} vs tolerance {tol:.0e}")


def _fd_gradient(model) -> CheckResult:
    rng = np.random.default_rng(1)
    C = model.covariance
    n = model.n
    worst = 0.0
    for _ in range(20):
        x = np.append(rng.standard_normal(n), rng.standard_normal())

        def value(y):
            return np.array([lagrange_value(C, EigenState(y[:-1], y[-1]))])

        fd = numeric_jacobian(value, x, FD_STEP)[0]
        g = lagrange_gradient(C, EigenState(x[:-1], x[-1]))
        worst = max(worst, float(np.max(np.abs(fd - g))))
    return _result("gradient_matches_finite_differences", worst, 1e-6)


def _fd_hessian(model) -> CheckResult:
    rng = np.random.default_rng(2)
    C = model.covariance
    n = model.n
    worst = 0.0
    for _ in range(20):
        x = np.append(rng.standard_normal(n), rng.standard_normal())

        def grad(y):
            return lagrange_gradient(C, EigenState(y[:-1], y[-1]))

        fd = numeric_jacobian(grad, x, FD_STEP)
        H = lagrange_hessian(C, EigenState(x[:-1], x[-1]))
        worst = max(worst, float(np.max(np.abs(fd - H))))
    return _result("hessian_matches_finite_differences", worst, 1e-5)


def _fixed_points(model) -> CheckResult:
    C = model.covariance
    worst = 0.0
    for q in range(1, model.n + 1):
        state = EigenState(model.eigenvectors[:, q - 1], model.eigenvalues[q - 1])
        worst = max(worst, float(np.max(np.abs(rhs_principal(C, state)))))
    for p in range(1, 5):
        for q in range(p, model.n + 1):
            cols = list(range(p - 1)) + [q - 1]
            chain = ChainState(model.eigenvectors[:, cols],
                               model.eigenvalues[np.array(cols)])
            wd, ld = rhs_arbitrary(C, chain, p)
            worst = max(worst, float(np.max(np.abs(wd))), abs(ld))
            wd, ld = rhs_deflated(C, chain, p)
            worst = max(worst, float(np.max(np.abs(wd))), abs(ld))
    zero = EigenState(np.zeros(model.n), 0.5)
    worst = max(worst, float(np.max(np.abs(rhs_principal(C, zero)))))
    return _result("rules_vanish_at_true_eigenpairs", worst, 1e-12)


def _rule_reduction(model) -> CheckResult:
    rng = np.random.default_rng(3)
    C = model.covariance
    worst = 0.0
    for _ in range(10):
        w = rng.standard_normal(model.n)
        l = rng.uniform(0.2, 2.0)
        chain = ChainState(w[:, None], np.array([l]))
        base = rhs_principal(C, EigenState(w, l))
        for variant in (rhs_deflated, rhs_arbitrary):
            wd, ld = variant(C, chain, 1)
            worst = max(worst, float(np.max(np.abs(np.append(wd, ld) - base))))
    return _result("rule_families_coincide_at_stage_1", worst, 1e-15)


def _deflation_equivalence() -> CheckResult:
    rng = np.random.default_rng(4)
    worst = 0.0
    for _ in range(10):
        n = int(rng.integers(3, 9))
        m = int(rng.integers(2, n + 1))
        W = rng.standard_normal((n, m))
        L = rng.uniform(0.3, 2.0, m)
        A = rng.standard_normal((n, n))
        C = 0.5 * (A + A.T)
        chain = ChainState(W, L)
        Wd, Ld = rhs_deflated_matrix(C, chain)
        for p in range(1, m + 1):
            wd, ld = rhs_deflated(C, chain, p)
            worst = max(worst, float(np.max(np.abs(Wd[:, p - 1] - wd))), abs(Ld[p - 1] - ld))
            Cd = C - (W[:, : p - 1] * L[: p - 1]) @ W[:, : p - 1].T
            ref = rhs_principal(Cd, chain.stage(p))
            worst = max(worst, float(np.max(np.abs(np.append(wd, ld) - ref))))
    return _result("deflation_matrix_and_two_path_forms_agree", worst, 1e-12)


def _sut_identities() -> CheckResult:
    rng = np.random.default_rng(5)
    ok = True
    for _ in range(10):
        m = int(rng.integers(2, 7))
        A = rng.standard_normal((m, m))
        D = np.diag(rng.standard_normal(m))
        S = sut(A)
        ok &= bool(np.all(S[np.tril_indices(m)] == 0.0))
        ok &= bool(np.array_equal(sut(A @ D), S @ D))
        ok &= bool(np.all(S[:, 0] == 0.0))
        for p in range(1, m + 1):
            masked = np.concatenate([A[: p - 1, p - 1], np.zeros(m - p + 1)])
            ok &= bool(np.array_equal(S[:, p - 1], masked))
    return CheckResult("triangular_extraction_identities", ok,
                       "exact equality" if ok else "identity violated")


def _principal_spectrum_fd(model, rhs_override=None) -> CheckResult:
    worst = 0.0
    rhs = rhs_override or stage_rhs(model.covariance, "principal")
    for q in range(1, model.n + 1):
        x = np.append(model.eigenvectors[:, q - 1], model.eigenvalues[q - 1])
        J = numeric_jacobian(packed_stage_rhs(rhs), x, FD_STEP)
        num = eigenvalues_general(J)
        ana = principal_spectrum(model.eigenvalues, q)
        worst = max(worst, match_eigenvalue_sets(num, ana.eigenvalues))
    return _result("principal_flow_spectrum_matches_fd_oracle", worst, 1e-5)


def _arbitrary_spectrum_fd(model) -> CheckResult:
    worst = 0.0
    for p in (2, 3):
        known = [(model.eigenvectors[:, i], model.eigenvalues[i]) for i in range(p - 1)]
        rhs = stage_rhs(model.covariance, "arbitrary", known)
        for q in (p, p + 2):
            x = np.append(model.eigenvectors[:, q - 1], model.eigenvalues[q - 1])
            J = numeric_jacobian(packed_stage_rhs(rhs), x, FD_STEP)
            num = eigenvalues_general(J)
            ana = arbitrary_spectrum(model.eigenvalues, p, q)
            worst = max(worst, match_eigenvalue_sets(num, ana.eigenvalues))
    return _result("stage_flow_spectrum_matches_fd_oracle", worst, 1e-5)


def _cross_spectrum() -> CheckResult:
    lam = np.array([9.0, 6.5, 4.0, 2.5, 1.0])
    worst = 0.0
    for (i, j) in ((1, 2), (3, 1), (2, 5)):
        num = eigenvalues_general(cross_jacobian_matrix(lam, i, j))
        ana = exact_hessian_cross_spectrum(lam, i, j)
        worst = max(worst, match_eigenvalue_sets(num, ana.eigenvalues))
    return _result("exact_hessian_cross_spectrum_matches_construction", worst, 1e-8)


def _bordered_spectrum() -> CheckResult:
    lam = np.array([8.0, 4.0, 2.0, 1.0, 0.5, 0.25])
    worst = 0.0
    saddles = True
    for p in range(1, 7):
        num = eigenvalues_general(bordered_hessian_matrix(lam, p))
        ana = bordered_hessian_spectrum(lam, p)
        worst = max(worst, match_eigenvalue_sets(num, ana.eigenvalues))
        saddles &= ana.classification == "saddle"
    result = _result("bordered_hessian_spectrum_matches_construction", worst, 1e-8)
    if not saddles:
        return CheckResult(result.name, False, "expected saddle classification for every p")
    return result


def _oracle_roundtrip() -> CheckResult:
    worst = 0.0
    for seed in (0, 1, 2):
        model = model_from_spectrum([8.0, 4.0, 2.0, 1.0], seed)
        values, vectors = symmetric_eigen_oracle(model.covariance)
        worst = max(worst, float(np.max(np.abs(values - model.eigenvalues))))
        for j in range(model.n):
            err = min(np.linalg.norm(vectors[:, j] - model.eigenvectors[:, j]),
                      np.linalg.norm(vectors[:, j] + model.eigenvectors[:, j]))
            worst = max(worst, float(err))
    return _result("reference_eigensolver_roundtrip", worst, 1e-8)


def _factored_form(model) -> CheckResult:
    rng = np.random.default_rng(6)
    C = model.covariance
    worst = 0.0
    for _ in range(20):
        state = EigenState(rng.standard_normal(model.n), rng.uniform(0.3, 1.5))
        direct = rhs_principal(C, state)
        factored = -inv_hessian_principal(state) @ lagrange_gradient(C, state)
        worst = max(worst, float(np.max(np.abs(direct - factored))))
    return _result("flow_equals_newton_descent_factored_form", worst, 1e-12)


def run_checks(inject_fault: bool = False) -> list[CheckResult]:
    """Run the full invariant suite; ``inject_fault`` sabotages one flow to prove
    the harness can fail (the FD spectrum check must then report a mismatch)."""
    loglinear = make_loglinear_model(10, 42)
    flat = model_from_spectrum([8.0, 4.0, 2.0, 1.0], 5)

    rhs_override = None
    if inject_fault:
        broken = np.zeros(flat.n), 1.0

        def rhs_override(w, l):
            # constant flow: the FD spectrum check must catch this
            return broken

    return [
        _fd_gradient(loglinear),
        _fd_hessian(loglinear),
        _fixed_points(loglinear),
        _rule_reduction(flat),
        _deflation_equivalence(),
        _sut_identities(),
        _principal_spectrum_fd(flat, rhs_override),
        _arbitrary_spectrum_fd(loglinear),
        _cross_spectrum(),
        _bordered_spectrum(),
        _oracle_roundtrip(),
        _factored_form(flat),
    ]


def report_dict(results: list[CheckResult]) -> dict:
    return {
        "passed": all(r.passed for r in results),
        "checks": [r.to_dict() for r in results],
    }
