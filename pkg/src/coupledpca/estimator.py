"""Scikit-learn style front end for the coupled eigenpair chains."""

from __future__ import annotations

import warnings

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.exceptions import ConvergenceWarning
from sklearn.utils.validation import check_array, check_is_fitted

from .dynamics import IntegratorConfig, run_chain
from .exceptions import DimensionError
from .validation import check_symmetric


class CoupledPCA(BaseEstimator):
    """Estimate the leading eigenpairs of a precomputed covariance matrix.

    ``fit`` integrates a chain of coupled eigenvector/eigenvalue flows on the given
    n x n symmetric matrix (no dataset ingestion happens here; compute the
    covariance however you like).  ``transform`` then projects row-wise data onto
    the estimated components, so the estimator composes with standard pipelines
    that carry a precomputed covariance.

    Parameters
    ----------
    n_components : int or None
        Number of leading eigenpairs to estimate (all of them by default).
    rule : {"deflation", "arbitrary"}
        Chain variant: remove converged pairs from the matrix, or couple each
        stage to its predecessors directly.
    scheme : {"sequential", "parallel"}
        Whether stages run one after another or advance together.
    gamma, max_steps, normalize_each_step, convergence_tol, divergence_cap
        Integrator settings; see :class:`~coupledpca.dynamics.IntegratorConfig`.
    random_state : int
        Seed for the initial unit-vector estimates.

    Attributes
    ----------
    components_ : ndarray of shape (n_components, n)
        Estimated eigenvectors, one per row, largest eigenvalue first.
    eigenvalues_ : ndarray of shape (n_components,)
        Matching eigenvalue estimates.
    converged_ : list of bool
        Per-stage convergence flags (a ConvergenceWarning is issued if any is False).
    """

    def __init__(self, n_components=None, *, rule="deflation", scheme="sequential",
                 gamma=1e-3, max_steps=100_000, normalize_each_step=True,
                 convergence_tol=1e-9, divergence_cap=1e6, random_state=0):
        self.n_components = n_components
        self.rule = rule
        self.scheme = scheme
        self.gamma = gamma
        self.max_steps = max_steps
        self.normalize_each_step = normalize_each_step
        self.convergence_tol = convergence_tol
        self.divergence_cap = divergence_cap
        self.random_state = random_state

    def fit(self, X, y=None):
        """Run the estimation chain on a symmetric covariance matrix X."""
        C = check_array(X, dtype=float)
        if C.shape[0] != C.shape[1]:
            raise DimensionError(f"expected a square covariance matrix, got {C.shape}")
        check_symmetric(C, tol=1e-8, name="covariance")
        n = C.shape[0]
        m = n if self.n_components is None else int(self.n_components)
        if not 1 <= m <= n:
            raise DimensionError(f"n_components must be in [1, {n}], got {m}")

        config = IntegratorConfig(
            gamma=self.gamma,
            steps=self.max_steps,
            normalize_each_step=self.normalize_each_step,
            convergence_tol=self.convergence_tol,
            divergence_cap=self.divergence_cap,
        )
        result = run_chain(C, self.rule, m, self.scheme, config,
                           seed=self.random_state, l0="rayleigh")
        if not all(result.converged) or len(result.converged) < m:
            warnings.warn(
                "some stages did not converge; inspect converged_ and consider "
                "more steps or a smaller gamma",
                ConvergenceWarning,
            )

        W = np.zeros((n, m))
        L = np.zeros(m)
        done = result.chain.m
        W[:, :done] = result.chain.W
        L[:done] = result.chain.L
        for j in range(done):
            k = int(np.argmax(np.abs(W[:, j])))
            if W[k, j] < 0.0:
                W[:, j] = -W[:, j]

        self.components_ = W.T
        self.eigenvalues_ = L
        self.converged_ = list(result.converged) + [False] * (m - done)
        self.records_ = result.records
        self.n_features_in_ = n
        return self

    def transform(self, X):
        """Project rows of X onto the estimated components."""
        check_is_fitted(self, "components_")
        X = check_array(X, dtype=float)
        if X.shape[1] != self.n_features_in_:
            raise DimensionError(
                f"X has {X.shape[1]} features, expected {self.n_features_in_}"
            )
        return X @ self.components_.T

    def inverse_transform(self, X):
        """Map projections back to the original coordinates."""
        check_is_fitted(self, "components_")
        X = check_array(X, dtype=float)
        return X @ self.components_
