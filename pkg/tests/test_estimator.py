"""Estimator API conformance and recovery quality."""

import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import ConvergenceWarning, NotFittedError

from coupledpca import CoupledPCA, DimensionError, SymmetryError, align_sign


@pytest.fixture(scope="module")
def fitted(model8421):
    est = CoupledPCA(n_components=3, gamma=1e-2, convergence_tol=1e-8, random_state=0)
    return est.fit(model8421.covariance)


class TestSklearnApi:
    def test_get_params_roundtrip(self):
        est = CoupledPCA(n_components=2, gamma=5e-3)
        params = est.get_params()
        assert params["n_components"] == 2
        assert params["gamma"] == 5e-3
        rebuilt = CoupledPCA(**params)
        assert rebuilt.get_params() == params

    def test_set_params(self):
        est = CoupledPCA()
        est.set_params(n_components=1, rule="arbitrary")
        assert est.n_components == 1 and est.rule == "arbitrary"

    def test_clone(self, fitted):
        fresh = clone(fitted)
        assert not hasattr(fresh, "components_")
        assert fresh.get_params() == fitted.get_params()

    def test_transform_before_fit_raises(self):
        with pytest.raises(NotFittedError):
            CoupledPCA().transform(np.eye(3))


class TestFit:
    def test_recovers_leading_pairs(self, fitted, model8421):
        assert np.allclose(fitted.eigenvalues_, [8.0, 4.0, 2.0], atol=1e-6)
        for j in range(3):
            err, _ = align_sign(fitted.components_[j], model8421.eigenvectors[:, j])
            assert err < 1e-5

    def test_component_sign_convention(self, fitted):
        for row in fitted.components_:
            assert row[np.argmax(np.abs(row))] > 0

    def test_deterministic_across_fits(self, model8421):
        kwargs = dict(n_components=2, gamma=1e-2, convergence_tol=1e-8, random_state=3)
        a = CoupledPCA(**kwargs).fit(model8421.covariance)
        b = CoupledPCA(**kwargs).fit(model8421.covariance)
        assert np.array_equal(a.components_, b.components_)
        assert np.array_equal(a.eigenvalues_, b.eigenvalues_)

    def test_default_estimates_all_pairs(self, model8421):
        est = CoupledPCA(gamma=1e-2, convergence_tol=1e-8, random_state=1)
        est.fit(model8421.covariance)
        assert est.components_.shape == (4, 4)
        assert np.allclose(est.eigenvalues_, [8.0, 4.0, 2.0, 1.0], atol=1e-5)

    def test_arbitrary_rule_variant(self, model8421):
        est = CoupledPCA(n_components=2, rule="arbitrary", gamma=1e-2,
                         convergence_tol=1e-8, random_state=2)
        est.fit(model8421.covariance)
        assert np.allclose(est.eigenvalues_, [8.0, 4.0], atol=1e-6)

    def test_non_square_rejected(self):
        with pytest.raises(DimensionError):
            CoupledPCA().fit(np.ones((3, 4)))

    def test_asymmetric_rejected(self):
        C = np.array([[1.0, 0.5], [0.0, 1.0]])
        with pytest.raises(SymmetryError):
            CoupledPCA().fit(C)

    def test_bad_n_components_rejected(self, model8421):
        with pytest.raises(DimensionError):
            CoupledPCA(n_components=9).fit(model8421.covariance)

    def test_convergence_warning_on_tiny_budget(self, model8421):
        est = CoupledPCA(n_components=1, max_steps=2, random_state=0)
        with pytest.warns(ConvergenceWarning):
            est.fit(model8421.covariance)
        assert est.converged_ == [False]


class TestTransform:
    def test_projects_onto_components(self, fitted, model8421):
        V = model8421.eigenvectors
        X = V[:, :1].T  # one sample: the top eigenvector as a row
        projected = fitted.transform(X)
        assert projected.shape == (1, 3)
        assert abs(abs(projected[0, 0]) - 1.0) < 1e-5
        assert np.max(np.abs(projected[0, 1:])) < 1e-5

    def test_inverse_transform_roundtrip(self, fitted):
        rng = np.random.default_rng(0)
        X = rng.standard_normal((5, 4))
        back = fitted.inverse_transform(fitted.transform(X))
        # projection onto the top-3 eigenspace, so applying it twice is stable
        # up to the convergence tolerance of the fitted components
        again = fitted.inverse_transform(fitted.transform(back))
        assert np.allclose(back, again, atol=1e-6)

    def test_feature_mismatch_rejected(self, fitted):
        with pytest.raises(DimensionError):
            fitted.transform(np.ones((2, 7)))
