"""Criterion derivatives, inverse Hessians, rule flows, and the sut identities."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from coupledpca import (
    ChainState,
    DimensionError,
    EigenState,
    SingularityError,
    eigenvalues_general,
    inv_hessian_arbitrary,
    inv_hessian_principal,
    lagrange_gradient,
    lagrange_hessian,
    lagrange_value,
    match_eigenvalue_sets,
    numeric_jacobian,
    online_rhs,
    rhs_arbitrary,
    rhs_deflated,
    rhs_deflated_matrix,
    rhs_principal,
    sut,
    transformed_hessian,
)

FD_STEP = 1e-6


def random_state(rng, n):
    return EigenState(rng.standard_normal(n), float(rng.standard_normal()))


class TestLagrangeValue:
    def test_at_unit_eigenvector_constraint_term_vanishes(self, model8421):
        for q in range(1, 5):
            pair = model8421.pair(q)
            value = lagrange_value(model8421.covariance, EigenState(pair.vector, 17.3))
            assert value == pytest.approx(pair.value / 2.0, abs=1e-12)

    def test_direct_evaluation(self):
        state = EigenState(np.array([1.0, 0.0]), 3.0)
        assert lagrange_value(np.diag([2.0, 1.0]), state) == pytest.approx(1.0)

    def test_zero_vector(self):
        state = EigenState(np.zeros(3), 5.0)
        assert lagrange_value(np.eye(3), state) == pytest.approx(2.5)


class TestLagrangeGradient:
    def test_zero_at_eigenpairs(self, model8421):
        for q in range(1, 5):
            pair = model8421.pair(q)
            g = lagrange_gradient(model8421.covariance, EigenState(pair.vector, pair.value))
            assert np.max(np.abs(g)) < 1e-12

    def test_direct_evaluation(self):
        g = lagrange_gradient(np.diag([3.0, 1.0]), EigenState(np.array([1.0, 0.0]), 1.0))
        assert np.allclose(g, [2.0, 0.0, 0.0])

    def test_matches_finite_differences(self, loglinear10):
        rng = np.random.default_rng(0)
        C = loglinear10.covariance
        for _ in range(25):
            state = random_state(rng, 10)
            x = state.packed()

            def value(y):
                return np.array([lagrange_value(C, EigenState(y[:-1], y[-1]))])

            fd = numeric_jacobian(value, x, FD_STEP)[0]
            assert np.max(np.abs(fd - lagrange_gradient(C, state))) < 1e-6


class TestLagrangeHessian:
    def test_direct_block_assembly(self):
        H = lagrange_hessian(np.diag([3.0, 1.0]), EigenState(np.array([1.0, 0.0]), 1.0))
        assert np.array_equal(H, np.array([[2.0, 0.0, -1.0], [0.0, 0.0, 0.0], [-1.0, 0.0, 0.0]]))

    def test_exactly_symmetric(self, loglinear10):
        rng = np.random.default_rng(1)
        state = random_state(rng, 10)
        H = lagrange_hessian(loglinear10.covariance, state)
        assert np.max(np.abs(H - H.T)) == 0.0

    def test_matches_finite_differences(self, loglinear10):
        rng = np.random.default_rng(2)
        C = loglinear10.covariance
        for _ in range(25):
            state = random_state(rng, 10)

            def grad(y):
                return lagrange_gradient(C, EigenState(y[:-1], y[-1]))

            fd = numeric_jacobian(grad, state.packed(), FD_STEP)
            assert np.max(np.abs(fd - lagrange_hessian(C, state))) < 1e-5


class TestTransformedHessian:
    def test_border_at_fixed_point(self, model8421):
        pair = model8421.pair(1)
        H = transformed_hessian(model8421, EigenState(pair.vector, pair.value))
        border = H[:4, 4]
        expected = np.zeros(4)
        expected[0] = -1.0
        assert np.allclose(border, expected, atol=1e-12)
        assert np.allclose(np.diag(H)[:4], model8421.eigenvalues - pair.value, atol=1e-12)

    def test_zero_state_gives_block_diagonal(self, model8421):
        H = transformed_hessian(model8421, EigenState(np.zeros(4), 0.0))
        assert np.allclose(H, np.diag(np.append(model8421.eigenvalues, 0.0)))

    def test_similarity_preserves_eigenvalues(self, loglinear10):
        rng = np.random.default_rng(3)
        for _ in range(10):
            state = random_state(rng, 10)
            full = eigenvalues_general(lagrange_hessian(loglinear10.covariance, state))
            rotated = eigenvalues_general(transformed_hessian(loglinear10, state))
            assert match_eigenvalue_sets(full, rotated) < 1e-10


class TestInverseHessians:
    def test_principal_direct_evaluation(self):
        H = inv_hessian_principal(EigenState(np.array([1.0, 0.0]), 2.0))
        assert np.allclose(H, [[0.0, 0.0, -1.0], [0.0, -0.5, 0.0], [-1.0, 0.0, 0.0]])

    def test_principal_zero_vector(self):
        H = inv_hessian_principal(EigenState(np.zeros(2), 1.0))
        assert np.allclose(H, [[-1.0, 0.0, 0.0], [0.0, -1.0, 0.0], [0.0, 0.0, 0.0]])

    def test_principal_guard(self):
        with pytest.raises(SingularityError):
            inv_hessian_principal(EigenState(np.ones(2), 1e-13))

    def test_product_with_hessian_near_identity_for_dominant_gap(self):
        # the approximation drops terms of order lam_2 / lam_1
        from coupledpca import model_from_spectrum

        model = model_from_spectrum([1.0, 1e-6, 1e-7], seed=2)
        pair = model.pair(1)
        state = EigenState(pair.vector, pair.value)
        product = inv_hessian_principal(state) @ lagrange_hessian(model.covariance, state)
        residual = np.max(np.abs(product - np.eye(4)))
        assert residual < 5e-6
        assert residual > 1e-8

    def test_arbitrary_reduces_to_principal_with_empty_known(self):
        state = EigenState(np.array([0.3, -0.2, 0.9]), 0.7)
        assert np.array_equal(inv_hessian_arbitrary(state, []), inv_hessian_principal(state))

    def test_arbitrary_direct_evaluation(self):
        state = EigenState(np.array([0.0, 1.0]), 1.0)
        H = inv_hessian_arbitrary(state, [(np.array([1.0, 0.0]), 4.0)])
        assert np.allclose(H, [[1.0 / 3.0, 0.0, 0.0], [0.0, 0.0, -1.0], [0.0, -1.0, 0.0]])

    def test_arbitrary_gap_guard(self):
        state = EigenState(np.array([0.0, 1.0]), 4.0 - 1e-13)
        with pytest.raises(SingularityError):
            inv_hessian_arbitrary(state, [(np.array([1.0, 0.0]), 4.0)])


class TestPrincipalFlow:
    def test_zero_at_every_eigenpair(self, model8421):
        for q in range(1, 5):
            pair = model8421.pair(q)
            out = rhs_principal(model8421.covariance, EigenState(pair.vector, pair.value))
            assert np.max(np.abs(out)) < 1e-12

    def test_zero_vector_fixed_point(self, loglinear10):
        out = rhs_principal(loglinear10.covariance, EigenState(np.zeros(10), 0.5))
        assert np.max(np.abs(out)) == 0.0

    def test_equals_factored_newton_descent(self, loglinear10):
        rng = np.random.default_rng(4)
        C = loglinear10.covariance
        for _ in range(25):
            state = EigenState(rng.standard_normal(10), float(rng.uniform(0.3, 1.5)))
            direct = rhs_principal(C, state)
            factored = -inv_hessian_principal(state) @ lagrange_gradient(C, state)
            assert np.max(np.abs(direct - factored)) < 1e-12

    def test_guard(self, loglinear10):
        with pytest.raises(SingularityError):
            rhs_principal(loglinear10.covariance, EigenState(np.ones(10), 0.0))


class TestDeflatedFlow:
    def test_stage_one_identical_to_principal(self, model8421):
        rng = np.random.default_rng(5)
        w = rng.standard_normal(4)
        chain = ChainState(w[:, None], np.array([0.8]))
        wd, ld = rhs_deflated(model8421.covariance, chain, 1)
        base = rhs_principal(model8421.covariance, EigenState(w, 0.8))
        assert np.max(np.abs(np.append(wd, ld) - base)) < 1e-15

    def test_zero_at_true_chain(self, model8421):
        chain = ChainState(model8421.eigenvectors, model8421.eigenvalues)
        for p in range(1, 5):
            wd, ld = rhs_deflated(model8421.covariance, chain, p)
            assert max(np.max(np.abs(wd)), abs(ld)) < 1e-12

    def test_matches_explicit_deflation(self):
        rng = np.random.default_rng(6)
        for _ in range(20):
            n, m = 6, 4
            W = rng.standard_normal((n, m))
            L = rng.uniform(0.3, 2.0, m)
            A = rng.standard_normal((n, n))
            C = 0.5 * (A + A.T)
            chain = ChainState(W, L)
            for p in range(1, m + 1):
                removed = (W[:, : p - 1] * L[: p - 1]) @ W[:, : p - 1].T
                expected = rhs_principal(C - removed, chain.stage(p))
                wd, ld = rhs_deflated(C, chain, p)
                assert np.max(np.abs(np.append(wd, ld) - expected)) < 1e-12


class TestDeflatedMatrixForm:
    def test_single_stage_matches_principal(self, model8421):
        rng = np.random.default_rng(7)
        w = rng.standard_normal(4)
        chain = ChainState(w[:, None], np.array([1.1]))
        Wd, Ld = rhs_deflated_matrix(model8421.covariance, chain)
        base = rhs_principal(model8421.covariance, EigenState(w, 1.1))
        assert np.max(np.abs(np.append(Wd[:, 0], Ld[0]) - base)) < 1e-14

    def test_columns_match_per_stage_form(self):
        rng = np.random.default_rng(8)
        for _ in range(20):
            n = int(rng.integers(2, 9))
            m = int(rng.integers(2, n + 1)) if n > 2 else 2
            W = rng.standard_normal((n, m))
            L = rng.uniform(0.3, 2.0, m)
            A = rng.standard_normal((n, n))
            C = 0.5 * (A + A.T)
            chain = ChainState(W, L)
            Wd, Ld = rhs_deflated_matrix(C, chain)
            for p in range(1, m + 1):
                wd, ld = rhs_deflated(C, chain, p)
                assert np.max(np.abs(Wd[:, p - 1] - wd)) < 1e-12
                assert abs(Ld[p - 1] - ld) < 1e-12

    def test_zero_at_true_chain(self, loglinear10):
        chain = ChainState(loglinear10.eigenvectors[:, :5], loglinear10.eigenvalues[:5])
        Wd, Ld = rhs_deflated_matrix(loglinear10.covariance, chain)
        assert max(np.max(np.abs(Wd)), np.max(np.abs(Ld))) < 1e-12


class TestArbitraryFlow:
    def test_stage_one_identical_to_principal(self, loglinear10):
        rng = np.random.default_rng(9)
        w = rng.standard_normal(10)
        chain = ChainState(w[:, None], np.array([0.4]))
        wd, ld = rhs_arbitrary(loglinear10.covariance, chain, 1)
        base = rhs_principal(loglinear10.covariance, EigenState(w, 0.4))
        assert np.max(np.abs(np.append(wd, ld) - base)) < 1e-15

    def test_zero_at_true_prefix_chains(self, loglinear10):
        V, lam = loglinear10.eigenvectors, loglinear10.eigenvalues
        for p in range(1, 6):
            for q in range(p, 11):
                cols = list(range(p - 1)) + [q - 1]
                chain = ChainState(V[:, cols], lam[np.array(cols)])
                wd, ld = rhs_arbitrary(loglinear10.covariance, chain, p)
                assert max(np.max(np.abs(wd)), abs(ld)) < 1e-12

    def test_zero_vector_fixed_point(self, loglinear10):
        V, lam = loglinear10.eigenvectors, loglinear10.eigenvalues
        W = np.column_stack([V[:, 0], V[:, 1], np.zeros(10)])
        chain = ChainState(W, np.array([lam[0], lam[1], 0.7]))
        wd, ld = rhs_arbitrary(loglinear10.covariance, chain, 3)
        assert max(np.max(np.abs(wd)), abs(ld)) == 0.0

    def test_eigenvalue_update_lacks_deflation_term(self, model8421):
        # same chain: the deflated rule subtracts overlap energy, this one does not
        rng = np.random.default_rng(10)
        W = rng.standard_normal((4, 2))
        L = np.array([3.5, 1.2])
        chain = ChainState(W, L)
        _, ld_arbitrary = rhs_arbitrary(model8421.covariance, chain, 2)
        _, ld_deflated = rhs_deflated(model8421.covariance, chain, 2)
        w = W[:, 1]
        overlap = float(w @ (W[:, :1] * L[:1]) @ W[:, :1].T @ w)
        assert ld_arbitrary - ld_deflated == pytest.approx(overlap, rel=1e-12)

    def test_gap_guard(self, model8421):
        chain = ChainState(model8421.eigenvectors[:, :2],
                           np.array([8.0, 8.0 - 1e-13]))
        with pytest.raises(SingularityError):
            rhs_arbitrary(model8421.covariance, chain, 2)


class TestOnlineForm:
    def test_zero_sample(self):
        w = np.array([0.6, 0.8])
        out = online_rhs(np.zeros(2), EigenState(w, 1.3), "principal")
        assert np.allclose(out[:2], 0.0, atol=1e-15)
        assert out[2] == pytest.approx(-1.3)

    def test_rank_one_consistency(self, model8421):
        v1 = model8421.pair(1).vector
        C = np.outer(v1, v1)
        state = EigenState(np.array([0.1, -0.4, 0.2, 0.9]), 0.6)
        assert np.array_equal(online_rhs(v1, state, "principal"), rhs_principal(C, state))

    def test_monte_carlo_mean_matches_averaged_flow(self, model8421):
        # flows are linear in the covariance, so the sample mean of the online form
        # estimates the averaged form without bias
        rng = np.random.default_rng(11)
        n, samples = 4, 100_000
        state = EigenState(np.array([0.5, -0.3, 0.8, 0.1]), 0.9)
        root = model8421.eigenvectors * np.sqrt(model8421.eigenvalues)
        X = rng.standard_normal((samples, n)) @ root.T
        # vectorized evaluation of the online flow over all samples
        w, l = state.w, state.l
        xw = X @ w
        Cw_samples = X * xw[:, None]
        wCw_samples = xw * xw
        ww = float(w @ w)
        wdot = (Cw_samples - wCw_samples[:, None] * w) / l + 0.5 * (ww - 1.0) * w
        ldot = wCw_samples - l * ww
        mc = np.append(wdot.mean(axis=0), ldot.mean(axis=0))
        sem = np.append(wdot.std(axis=0), ldot.std(axis=0)) / np.sqrt(samples)
        exact = rhs_principal(model8421.covariance, state)
        assert np.all(np.abs(mc - exact) < 3.0 * sem + 1e-12)
        # spot-check the vectorization against the scalar online form
        single = online_rhs(X[0], state, "principal")
        assert np.allclose(single, np.append(wdot[0], ldot[0]), atol=1e-12)

    def test_chain_kinds_dispatch(self, model8421):
        rng = np.random.default_rng(12)
        W = rng.standard_normal((4, 2))
        chain = ChainState(W, np.array([2.0, 0.7]))
        x = rng.standard_normal(4)
        C = np.outer(x, x)
        wd, ld = online_rhs(x, chain, "deflation", p=2)
        ref_wd, ref_ld = rhs_deflated(C, chain, 2)
        assert np.array_equal(wd, ref_wd) and ld == ref_ld
        wd, ld = online_rhs(x, chain, "arbitrary", p=2)
        ref_wd, ref_ld = rhs_arbitrary(C, chain, 2)
        assert np.array_equal(wd, ref_wd) and ld == ref_ld


class TestSut:
    def test_definition(self):
        assert np.array_equal(sut([[1.0, 2.0], [3.0, 4.0]]), [[0.0, 2.0], [0.0, 0.0]])

    def test_non_square_rejected(self):
        with pytest.raises(DimensionError):
            sut(np.ones((2, 3)))

    @given(seed=st.integers(0, 1000), m=st.integers(2, 6))
    @settings(max_examples=40, deadline=None)
    def test_first_column_always_zero(self, seed, m):
        A = np.random.default_rng(seed).standard_normal((m, m))
        assert np.all(sut(A)[:, 0] == 0.0)

    @given(seed=st.integers(0, 1000), m=st.integers(2, 6))
    @settings(max_examples=40, deadline=None)
    def test_column_masking_identity(self, seed, m):
        A = np.random.default_rng(seed).standard_normal((m, m))
        S = sut(A)
        for p in range(1, m + 1):
            masked = np.concatenate([A[: p - 1, p - 1], np.zeros(m - p + 1)])
            assert np.array_equal(S[:, p - 1], masked)

    @given(seed=st.integers(0, 1000))
    @settings(max_examples=40, deadline=None)
    def test_diagonal_commutation_is_exact(self, seed):
        rng = np.random.default_rng(seed)
        A = rng.standard_normal((5, 5))
        D = np.diag(rng.standard_normal(5))
        assert np.array_equal(sut(A @ D), sut(A) @ D)

    def test_triple_product_column_identity(self):
        # (U sut(V^T W))_p equals the partial sum over preceding columns
        rng = np.random.default_rng(13)
        n, m = 6, 4
        U, V, W = (rng.standard_normal((n, m)) for _ in range(3))
        product = U @ sut(V.T @ W)
        for p in range(1, m + 1):
            expected = sum(U[:, i] * (V[:, i] @ W[:, p - 1]) for i in range(p - 1))
            assert np.allclose(product[:, p - 1], expected, atol=1e-12)


class TestStateTypes:
    def test_packed_roundtrip(self):
        state = EigenState(np.array([1.0, 2.0]), 3.0)
        again = EigenState.from_packed(state.packed())
        assert np.array_equal(again.w, state.w) and again.l == state.l

    def test_chain_rejects_more_stages_than_dimensions(self):
        with pytest.raises(DimensionError):
            ChainState(np.ones((2, 3)), np.ones(3))

    def test_chain_stage_accessor(self):
        chain = ChainState(np.eye(3)[:, :2], np.array([2.0, 1.0]))
        stage = chain.stage(2)
        assert stage.l == 1.0 and np.array_equal(stage.w, np.eye(3)[:, 1])

    def test_non_finite_rejected(self):
        with pytest.raises(DimensionError):
            EigenState(np.array([np.nan, 0.0]), 1.0)
