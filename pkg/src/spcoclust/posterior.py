"""Conditional laws of the per-gene variances given data and a fitted model.

Given the block parameters, the variance of gene ``i`` inside block
``(k, r)`` is inverse-gamma with shape ``p_r / 2 + alpha`` and scale
``quad / 2 + beta``, where ``quad`` is the Mahalanobis form of the centred
row under ``Delta = tau K + xi I``.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq
from scipy.special import gammaincc, gammainccinv, gammaln

from .core import BlockParameters
from .exceptions import EmptyBlock, InvalidLevel, UndefinedMean
from .kernels import KernelEigenCache, KernelParams, kernel_eigen, kernel_from_distances
from .likelihood import row_workspace

QUANTILE_TOL = 1e-8


@dataclass(frozen=True)
class SigmaPosterior:
    alpha_star: float
    beta_star: float
    gene_id: str = ""
    block: tuple = (0, 0)

    def __post_init__(self):
        if not (self.alpha_star > 0 and self.beta_star > 0):
            raise ValueError("inverse-gamma shape and scale must be positive")

    def logpdf(self, s2):
        s2 = np.asarray(s2, dtype=float)
        a, b = self.alpha_star, self.beta_star
        return a * np.log(b) - gammaln(a) - (a + 1) * np.log(s2) - b / s2

    def cdf(self, s2):
        # sigma2 <= q  <=>  1/sigma2 >= 1/q, with 1/sigma2 ~ Gamma(a, rate=b)
        return gammaincc(self.alpha_star, self.beta_star / np.asarray(s2, dtype=float))


def sigma_posterior(x_row_in_block, theta: BlockParameters, cache: KernelEigenCache, gene_id="", block=(0, 0)):
    ws = row_workspace(x_row_in_block, theta.mu, theta.tau, theta.xi, theta.alpha, theta.beta, cache)
    return SigmaPosterior(ws.alpha_star, ws.beta_star, str(gene_id), tuple(block))


def ig_mean(post: SigmaPosterior) -> float:
    if post.alpha_star <= 1:
        raise UndefinedMean(f"alpha_star={post.alpha_star} <= 1")
    return post.beta_star / (post.alpha_star - 1.0)


def ig_quantile(post: SigmaPosterior, prob: float) -> float:
    """Quantile via the inverse upper incomplete gamma, polished by root-finding if needed."""
    a, b = post.alpha_star, post.beta_star
    q = b / gammainccinv(a, prob)
    if np.isfinite(q) and abs(post.cdf(q) - prob) <= QUANTILE_TOL:
        return float(q)
    # bracket in log space around the rough estimate
    f = lambda lq: float(post.cdf(np.exp(lq))) - prob
    centre = np.log(q) if np.isfinite(q) and q > 0 else np.log(b / a)
    lo, hi = centre - 1.0, centre + 1.0
    while f(lo) > 0:
        lo -= 2.0
    while f(hi) < 0:
        hi += 2.0
    return float(np.exp(brentq(f, lo, hi, xtol=1e-14, rtol=4e-16)))


def ig_credible_interval(post: SigmaPosterior, level: float):
    """Equal-tailed interval holding ``level`` posterior mass."""
    if not (0.0 < level < 1.0):
        raise InvalidLevel(f"level must lie in (0, 1), got {level}")
    return ig_quantile(post, 0.5 * (1.0 - level)), ig_quantile(post, 0.5 * (1.0 + level))


def fit_caches(fit, ds):
    """Eigen caches of every fitted column cluster, in cluster order."""
    dist = ds.distances()
    cols0 = fit.labels.cols0
    caches = []
    for r in range(fit.labels.n_col_clusters):
        members = np.flatnonzero(cols0 == r)
        params = KernelParams(fit.kernel_kind, fit.phi[r])
        K = kernel_from_distances(fit.kernel_kind, dist[np.ix_(members, members)], params)
        caches.append(kernel_eigen(K, params, r, members))
    return caches


@dataclass(frozen=True)
class RankedGene:
    gene_id: str
    mean: float
    lo: float
    hi: float


def top_variable_genes(fit, ds, k: int, r: int, count: int, level: float = 0.95, caches=None):
    """Genes of row cluster ``k`` ranked by posterior mean variance in block ``(k, r)``.

    ``k`` and ``r`` are 1-based. Ties in the mean are broken by gene id so
    the ranking does not depend on row order.
    """
    K, R = fit.labels.n_row_clusters, fit.labels.n_col_clusters
    if not (1 <= k <= K and 1 <= r <= R):
        raise EmptyBlock(f"block ({k}, {r}) is outside the {K} x {R} grid")
    if count < 1:
        raise ValueError("count must be >= 1")
    rows = np.flatnonzero(fit.labels.rows0 == k - 1)
    cols = np.flatnonzero(fit.labels.cols0 == r - 1)
    if rows.size == 0 or cols.size == 0:
        raise EmptyBlock(f"block ({k}, {r}) has no rows or no columns")
    cache = (caches or fit_caches(fit, ds))[r - 1]
    theta = fit.theta[k - 1][r - 1]
    ranked = []
    for i in rows:
        post = sigma_posterior(ds.values[i, cols], theta, cache, ds.row_ids[i], (k, r))
        lo, hi = ig_credible_interval(post, level)
        ranked.append(RankedGene(str(ds.row_ids[i]), ig_mean(post), lo, hi))
    ranked.sort(key=lambda g: (-g.mean, g.gene_id))
    return ranked[:count]


def write_ranking(path, ranking, k, r):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["gene_id", "k", "r", "mean", "lo", "hi"])
        for g in ranking:
            w.writerow([g.gene_id, k, r, repr(g.mean), repr(g.lo), repr(g.hi)])
