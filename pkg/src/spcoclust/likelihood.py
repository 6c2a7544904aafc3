"""Marginal row density and classification log-likelihood.

Within block (k, r) a row restricted to the columns of cluster r is
Gaussian with covariance ``sigma2 * (tau K_r + xi I)`` and ``sigma2`` has an
inverse-gamma(alpha, beta) prior. Integrating ``sigma2`` out gives a
multivariate Student-type density whose log is evaluated here through the
eigendecomposition of ``K_r``, so one factorization serves every (tau, xi).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln

from .exceptions import DimensionMismatch, StaleCache
from .kernels import KernelEigenCache

LOG_2PI = float(np.log(2.0 * np.pi))


@dataclass(frozen=True)
class RowDensityWorkspace:
    alpha_star: float
    beta_star: float
    logdet_delta: float
    quad_form: float


def delta_logdet_and_solve(cache: KernelEigenCache, tau, xi, v):
    """Log-determinant of ``tau K + xi I``, the solve against ``v`` and ``v^T Delta^-1 v``."""
    v = np.asarray(v, dtype=float)
    if v.shape != (cache.size,):
        raise DimensionMismatch(f"vector of length {v.shape} for a kernel of order {cache.size}")
    d = tau * cache.eigenvalues + xi
    U = cache.eigenvectors
    coef = (U.T @ v) / d
    solved = U @ coef
    quad = float(np.dot(U.T @ v, coef))
    return float(np.log(d).sum()), solved, max(quad, 0.0)


def row_workspace(x_row, mu, tau, xi, alpha, beta, cache: KernelEigenCache) -> RowDensityWorkspace:
    x_row = np.asarray(x_row, dtype=float)
    logdet, _, quad = delta_logdet_and_solve(cache, tau, xi, x_row - mu)
    return RowDensityWorkspace(
        alpha_star=cache.size / 2.0 + alpha,
        beta_star=quad / 2.0 + beta,
        logdet_delta=logdet,
        quad_form=quad,
    )


def row_marginal_logdensity(x_row, mu, tau, xi, alpha, beta, cache: KernelEigenCache) -> float:
    """Log marginal density of one row within one block, ``sigma2`` integrated out."""
    ws = row_workspace(x_row, mu, tau, xi, alpha, beta, cache)
    p = cache.size
    return float(
        -0.5 * p * LOG_2PI
        - 0.5 * ws.logdet_delta
        + gammaln(ws.alpha_star)
        - gammaln(alpha)
        + alpha * np.log(beta)
        - ws.alpha_star * np.log(ws.beta_star)
    )


@dataclass(frozen=True, eq=False)
class ProjectedCluster:
    """Data of one column cluster rotated into its kernel eigenbasis.

    ``Y = X[:, cols] @ U`` and ``u = U^T 1``; with these every quadratic
    form of every block in the cluster costs O(p_r) per row.
    """

    cache: KernelEigenCache
    Y: np.ndarray
    u: np.ndarray

    @classmethod
    def build(cls, X, cache: KernelEigenCache, columns=None):
        columns = cache.columns if columns is None else columns
        Xr = X[:, list(columns)]
        return cls(cache, Xr @ cache.eigenvectors, cache.ones_projection)


def block_quadratic_forms(proj: ProjectedCluster, mu, tau, xi, rows=None):
    """Quadratic forms ``(x - mu 1)^T Delta^-1 (x - mu 1)`` for one block, plus log|Delta|."""
    d = tau * proj.cache.eigenvalues + xi
    Y = proj.Y if rows is None else proj.Y[rows]
    resid = Y - mu * proj.u
    return (resid * resid / d).sum(axis=1), float(np.log(d).sum())


def cluster_logdensities(proj: ProjectedCluster, mu, tau, xi, alpha, beta) -> np.ndarray:
    """Log densities of every row under every row cluster for one column cluster.

    The parameter arguments are length-K vectors (column r of the block
    grids). Returns an ``(n, K)`` array.
    """
    lam, Y, u = proj.cache.eigenvalues, proj.Y, proj.u
    p = lam.shape[0]
    out = np.empty((Y.shape[0], len(mu)))
    for k in range(len(mu)):
        d = tau[k] * lam + xi[k]
        resid = Y - mu[k] * u
        quad = (resid * resid / d).sum(axis=1)
        a_star = 0.5 * p + alpha[k]
        out[:, k] = (
            -0.5 * p * LOG_2PI
            - 0.5 * np.log(d).sum()
            + gammaln(a_star)
            - gammaln(alpha[k])
            + alpha[k] * np.log(beta[k])
            - a_star * np.log(beta[k] + 0.5 * quad)
        )
    return out


def as_block_arrays(theta):
    """Normalize a parameter grid to ``(mu, tau, xi, alpha, beta)`` arrays of shape (K, R).

    Accepts a K x R nested list of :class:`~spcoclust.core.BlockParameters`
    or any object/mapping exposing ``mu, tau, xi, alpha, beta``.
    """
    names = ("mu", "tau", "xi", "alpha", "beta")
    if isinstance(theta, dict):
        return tuple(np.asarray(theta[n], dtype=float) for n in names)
    if all(hasattr(theta, n) for n in names):
        return tuple(np.asarray(getattr(theta, n), dtype=float) for n in names)
    return tuple(
        np.array([[getattr(b, n) for b in row] for row in theta], dtype=float) for n in names
    )


def check_caches(caches, cols0, phi=None):
    """Raise :class:`StaleCache` when a cache was built on other columns or kernel parameters."""
    for r, cache in enumerate(caches):
        members = tuple(np.flatnonzero(cols0 == r).tolist())
        if cache.columns is None or tuple(cache.columns) != members:
            raise StaleCache(f"cache for column cluster {r + 1} does not match the current labels")
        if phi is not None and cache.phi_used is not None:
            if not np.allclose(cache.phi_used.values, np.atleast_1d(phi[r]), rtol=0, atol=0):
                raise StaleCache(f"cache for column cluster {r + 1} was built with other kernel parameters")


def loglik_terms(X, rows0, caches, mu, tau, xi, alpha, beta) -> np.ndarray:
    """Per-column-cluster contributions to the classification log-likelihood."""
    n = X.shape[0]
    out = np.empty(len(caches))
    for r, cache in enumerate(caches):
        ld = cluster_logdensities(
            ProjectedCluster.build(X, cache), mu[:, r], tau[:, r], xi[:, r], alpha[:, r], beta[:, r]
        )
        out[r] = ld[np.arange(n), rows0].sum()
    return out


def classification_loglik(ds, labels, theta, phi, caches) -> float:
    """Classification log-likelihood of the data given hard labels and parameters.

    Parameters
    ----------
    ds : ExpressionDataset
    labels : CoClusterLabels
    theta : K x R grid of BlockParameters, or arrays (see :func:`as_block_arrays`)
    phi : sequence of kernel parameter vectors, one per column cluster, or None
        to skip the parameter consistency check
    caches : sequence of KernelEigenCache, one per column cluster
    """
    cols0, rows0 = labels.cols0, labels.rows0
    check_caches(caches, cols0, phi)
    mu, tau, xi, alpha, beta = as_block_arrays(theta)
    return float(loglik_terms(ds.values, rows0, caches, mu, tau, xi, alpha, beta).sum())
