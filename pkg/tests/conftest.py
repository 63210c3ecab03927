import numpy as np
import pytest

from coupledpca import SpectralModel, make_loglinear_model, model_from_spectrum


@pytest.fixture(scope="session")
def loglinear10():
    return make_loglinear_model(10, 42)


@pytest.fixture(scope="session")
def model8421():
    return model_from_spectrum([8.0, 4.0, 2.0, 1.0], seed=5)


@pytest.fixture(scope="session")
def diag_loglinear10():
    """Axis-aligned variant: eigenvector arithmetic is exact in floating point."""
    values = np.exp(-np.arange(1, 11, dtype=float))
    return SpectralModel(n=10, eigenvectors=np.eye(10), eigenvalues=values,
                         covariance=np.diag(values))
