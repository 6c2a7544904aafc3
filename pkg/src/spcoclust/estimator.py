"""scikit-learn style wrapper around the co-clustering fit."""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClusterMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .core import ExpressionDataset, ModelSpec
from .estimation import FitConfig, fit
from .kernels import KernelKind
from .likelihood import ProjectedCluster, cluster_logdensities
from .posterior import fit_caches


class SpatialCoclustering(ClusterMixin, BaseEstimator):
    """Co-cluster the rows and spatially located columns of a matrix.

    Parameters
    ----------
    n_row_clusters, n_col_clusters : int
    kernel : {"exponential", "rational_quadratic", "gaussian"}
    c_delta : float
        Fixed value of ``tau + xi`` in every block.
    max_iterations, se_repeats, m_max, n_starts : int
        Run length, Metropolis-Hastings updates per iteration, largest
        number of columns moved at once, independent starts.
    random_state : int
    n_jobs : int or None
        Parallel starts; None reads the environment default.

    Attributes
    ----------
    row_labels_, column_labels_ : ndarray of int
        0-based cluster index of every row / column.
    mu_, tau_, xi_, alpha_, beta_ : ndarray of shape (K, R)
    phi_ : ndarray of shape (R, n_kernel_params)
    loglik_, icl_ : float
    fit_result_ : FitResult
    """

    def __init__(
        self,
        n_row_clusters=3,
        n_col_clusters=3,
        kernel="exponential",
        c_delta=10.0,
        max_iterations=200,
        se_repeats=100,
        m_max=5,
        n_starts=5,
        random_state=0,
        n_jobs=None,
    ):
        self.n_row_clusters = n_row_clusters
        self.n_col_clusters = n_col_clusters
        self.kernel = kernel
        self.c_delta = c_delta
        self.max_iterations = max_iterations
        self.se_repeats = se_repeats
        self.m_max = m_max
        self.n_starts = n_starts
        self.random_state = random_state
        self.n_jobs = n_jobs

    def _config(self):
        return FitConfig(
            max_iterations=self.max_iterations,
            se_repeats_per_iteration=self.se_repeats,
            m_max=self.m_max,
            n_starts=self.n_starts,
            seed=int(self.random_state or 0),
        )

    def fit(self, X, y=None, coords=None):
        """Fit on ``X`` (rows x spots) with spot locations ``coords`` of shape (n_spots, 2)."""
        if coords is None:
            raise ValueError("coords (one 2-D location per column) are required")
        X = check_array(X, dtype=float, ensure_min_samples=1, ensure_min_features=2)
        coords = check_array(coords, dtype=float)
        self._ds = ExpressionDataset.from_arrays(X, coords)
        spec = ModelSpec(self.n_row_clusters, self.n_col_clusters, KernelKind.parse(self.kernel), float(self.c_delta))
        result = fit(self._ds, spec, self._config(), n_jobs=self.n_jobs)
        self.fit_result_ = result
        self.row_labels_ = result.labels.rows0
        self.column_labels_ = result.labels.cols0
        self.labels_ = self.row_labels_
        self.mu_, self.tau_, self.xi_ = result.mu, result.tau, result.xi
        self.alpha_, self.beta_, self.phi_ = result.alpha, result.beta, result.phi
        self.loglik_, self.icl_ = result.best_loglik, result.icl
        self.n_features_in_ = X.shape[1]
        self._caches = fit_caches(result, self._ds)
        return self

    def row_logdensities(self, X):
        """``(n, K)`` log densities of each row under every row cluster."""
        check_is_fitted(self, "fit_result_")
        X = check_array(X, dtype=float)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(f"X has {X.shape[1]} columns, the model was fitted on {self.n_features_in_}")
        total = np.zeros((X.shape[0], self.n_row_clusters))
        for r, cache in enumerate(self._caches):
            proj = ProjectedCluster.build(X, cache)
            total += cluster_logdensities(
                proj, self.mu_[:, r], self.tau_[:, r], self.xi_[:, r], self.alpha_[:, r], self.beta_[:, r]
            )
        return total

    def predict(self, X):
        """Row-cluster index of each row of ``X`` given the fitted column clusters."""
        return np.argmax(self.row_logdensities(X), axis=1)

    def fit_predict(self, X, y=None, coords=None):
        return self.fit(X, coords=coords).row_labels_
