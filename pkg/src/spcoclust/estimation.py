"""Classification-stochastic EM for the spatial co-clustering model.

Each iteration runs three steps:

1. CE: every row moves to the row cluster maximizing its density given
   the current column clusters and parameters.
2. SE: a Metropolis-Hastings chain over the column labels (moves M1/M2,
   see :mod:`spcoclust.moves`), repeated many times per iteration.
3. M: per column cluster, a bound-constrained L-BFGS-B maximization over
   the kernel parameters and the (mu, tau, alpha, beta) of every non-empty
   block, with ``xi = c_delta - tau``.

The returned estimate is the state at the iteration with the largest
classification log-likelihood over all starts.

Label arrays handled by this module are 0-based.
"""

from __future__ import annotations

import logging
import os
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize
from scipy.special import digamma, gammaln

from .core import BlockGrid, CoClusterLabels, ExpressionDataset, FitResult, ModelSpec
from .exceptions import ConfigInvalid, NotPositiveSemidefinite, OptimizerFailure
from .kernels import KernelKind, KernelParams, kernel_eigen, kernel_from_distances
from .likelihood import LOG_2PI, ProjectedCluster, as_block_arrays, check_caches, cluster_logdensities
from .moves import propose_m1, propose_m2

logger = logging.getLogger(__name__)

#: environment variable overriding the default number of parallel starts
N_JOBS_ENV = "SPCOCLUST_N_JOBS"

# generous upper bounds on log-parameters, only there to keep line searches finite
_LOG_ALPHA_MAX = 20.0
_LOG_BETA_MAX = 40.0


@dataclass(frozen=True)
class FitConfig:
    """Run-length, sampler and optimizer settings.

    ``m_step_max_iter`` caps the L-BFGS-B iterations of one M step; since
    every M step is warm-started from the previous estimate the cap only
    bounds per-iteration cost. ``init_perturbation`` is the fraction of
    labels reassigned at random for starts after the first.
    """

    max_iterations: int = 5000
    se_repeats_per_iteration: int = 100
    m_max: int = 5
    n_starts: int = 5
    seed: int = 0
    move_m1_probability: float = 0.5
    optimizer_tolerance: float = 1e-6
    parameter_floor: float = 1e-4
    m_step_max_iter: int = 50
    init_perturbation: float = 0.2
    monotonicity_tolerance: float = 1e-8

    def __post_init__(self):
        for name in ("max_iterations", "se_repeats_per_iteration", "m_max", "n_starts", "m_step_max_iter"):
            if int(getattr(self, name)) < 1:
                raise ConfigInvalid(f"{name} must be >= 1")
        for name in ("move_m1_probability", "init_perturbation"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ConfigInvalid(f"{name} must lie in [0, 1]")
        if not self.parameter_floor > 0 or not self.optimizer_tolerance > 0:
            raise ConfigInvalid("parameter_floor and optimizer_tolerance must be positive")


def default_phi(kind, dist, cols0, R) -> np.ndarray:
    """Starting kernel parameters: half the median within-cluster spot distance."""
    kind = KernelKind.parse(kind)
    out = []
    for r in range(R):
        members = np.flatnonzero(cols0 == r)
        sub = dist[np.ix_(members, members)][np.triu_indices(members.size, 1)]
        scale = 0.5 * float(np.median(sub)) if sub.size else 1.0
        scale = scale if scale > 0 else 1.0
        out.append([scale, 2.0] if kind is KernelKind.RATIONAL_QUADRATIC else [scale])
    return np.array(out, dtype=float)


def moment_parameters(X, rows0, cols0, K, R, c_delta, floor=1e-4):
    """Block-moment starting values: block mean, tau = xi = c/2, alpha = 3, beta = 2 var / c."""
    mu = np.zeros((K, R))
    beta = np.zeros((K, R))
    for r in range(R):
        Xr = X[:, cols0 == r]
        for k in range(K):
            block = Xr[rows0 == k]
            if block.size == 0:
                block = Xr
            mu[k, r] = block.mean()
            beta[k, r] = max(2.0 * block.var() / c_delta, floor)
    return BlockGrid(mu, np.full((K, R), c_delta / 2.0), np.full((K, R), 3.0), beta, c_delta)


class _Chain:
    """Mutable state of one CS-EM chain.

    ``kfull[r]`` is the kernel of column cluster r's parameters evaluated
    over all spots, so any candidate column set is a sub-matrix lookup.
    """

    def __init__(self, X, dist, kind, c_delta, rows0, cols0, blocks: BlockGrid, phi, config: FitConfig):
        self.X = X
        self.dist = dist
        self.kind = KernelKind.parse(kind)
        self.c = float(c_delta)
        self.config = config
        self.rows0 = np.array(rows0, dtype=int)
        self.cols0 = np.array(cols0, dtype=int)
        self.mu = np.array(blocks.mu, dtype=float)
        self.tau = np.array(blocks.tau, dtype=float)
        self.alpha = np.array(blocks.alpha, dtype=float)
        self.beta = np.array(blocks.beta, dtype=float)
        self.phi = np.array(phi, dtype=float).reshape(self.mu.shape[1], -1)
        self.K, self.R = self.mu.shape
        self.kfull = [kernel_from_distances(self.kind, dist, self.phi[r]) for r in range(self.R)]
        self.proj = [self._project(r, np.flatnonzero(self.cols0 == r)) for r in range(self.R)]
        self.refresh_logdensities()
        self.n_proposals = 0
        self.n_accepted = 0

    # -- bookkeeping -----------------------------------------------------
    def _project(self, r, members, kfull=None):
        kfull = self.kfull[r] if kfull is None else kfull
        cache = kernel_eigen(
            kfull[np.ix_(members, members)],
            phi_used=KernelParams(self.kind, self.phi[r]),
            col_cluster=r,
            columns=members,
        )
        return ProjectedCluster.build(self.X, cache)

    def _column_params(self, r):
        return self.mu[:, r], self.tau[:, r], self.c - self.tau[:, r], self.alpha[:, r], self.beta[:, r]

    def refresh_logdensities(self, clusters=None):
        clusters = range(self.R) if clusters is None else clusters
        if not hasattr(self, "ld"):
            self.ld = [None] * self.R
        for r in clusters:
            self.ld[r] = cluster_logdensities(self.proj[r], *self._column_params(r))

    def contributions(self) -> np.ndarray:
        idx = np.arange(self.X.shape[0])
        return np.array([ld[idx, self.rows0].sum() for ld in self.ld])

    def loglik(self) -> float:
        return float(self.contributions().sum())

    def blocks(self) -> BlockGrid:
        return BlockGrid(self.mu, self.tau, self.alpha, self.beta, self.c)

    def caches(self):
        return [p.cache for p in self.proj]

    def snapshot(self):
        return dict(
            rows0=self.rows0.copy(),
            cols0=self.cols0.copy(),
            mu=self.mu.copy(),
            tau=self.tau.copy(),
            alpha=self.alpha.copy(),
            beta=self.beta.copy(),
            phi=self.phi.copy(),
        )

    # -- CE step -----------------------------------------------------------
    def ce(self):
        total = np.sum(self.ld, axis=0)
        self.rows0 = np.argmax(total, axis=1)  # first maximum, i.e. smallest k on ties

    # -- SE step -----------------------------------------------------------
    def _own_loglik(self, proj, r, row_sets):
        p = proj.cache.size
        lam = proj.cache.eigenvalues
        total = 0.0
        for k, rows in row_sets:
            tau, alpha, beta = self.tau[k, r], self.alpha[k, r], self.beta[k, r]
            d = tau * lam + (self.c - tau)
            resid = proj.Y[rows] - self.mu[k, r] * proj.u
            quad = (resid * resid / d).sum(axis=1)
            a_star = 0.5 * p + alpha
            total += rows.size * (
                -0.5 * p * LOG_2PI - 0.5 * np.log(d).sum() + gammaln(a_star) - gammaln(alpha) + alpha * np.log(beta)
            ) - a_star * np.log(beta + 0.5 * quad).sum()
        return float(total)

    def se(self, rng):
        if self.R < 2:
            return
        cfg = self.config
        row_sets = [(k, np.flatnonzero(self.rows0 == k)) for k in range(self.K)]
        row_sets = [(k, rows) for k, rows in row_sets if rows.size]
        contrib = [self._own_loglik(self.proj[r], r, row_sets) for r in range(self.R)]
        touched = set()
        for _ in range(cfg.se_repeats_per_iteration):
            m = int(rng.integers(1, cfg.m_max + 1))
            if rng.random() < cfg.move_m1_probability:
                prop = propose_m1(self.cols0, m, rng, self.R)
            else:
                prop = propose_m2(self.cols0, m, rng, self.R)
            self.n_proposals += 1
            if not prop.feasible:
                continue
            new_proj = {r: self._project(r, np.flatnonzero(prop.candidate == r)) for r in prop.affected}
            new_contrib = {r: self._own_loglik(pr, r, row_sets) for r, pr in new_proj.items()}
            log_a = sum(new_contrib[r] - contrib[r] for r in new_proj) + prop.log_transition_ratio
            if log_a >= 0.0 or rng.random() < np.exp(log_a):
                self.cols0 = prop.candidate
                for r, pr in new_proj.items():
                    self.proj[r] = pr
                    contrib[r] = new_contrib[r]
                    touched.add(r)
                self.n_accepted += 1
        self.refresh_logdensities(sorted(touched))

    # -- M step ------------------------------------------------------------
    def _cluster_objective(self, r, members, active, row_sets):
        Xr = self.X[:, members]
        dist_r = self.dist[np.ix_(members, members)]
        dim = self.phi.shape[1]
        c = self.c
        p = members.size

        def evaluate(z, with_grad):
            phi = np.exp(z[:dim])
            try:
                cache = kernel_eigen(kernel_from_distances(self.kind, dist_r, phi))
            except (NotPositiveSemidefinite, np.linalg.LinAlgError):
                return -np.inf, None, None
            lam, U = cache.eigenvalues, cache.eigenvectors
            Y = Xr @ U
            u = U.sum(axis=0)
            total = 0.0
            grad = np.zeros_like(z) if with_grad else None
            for j, k in enumerate(active):
                mu, tau, la, lb = z[dim + 4 * j : dim + 4 * j + 4]
                alpha, beta = np.exp(la), np.exp(lb)
                rows = row_sets[k]
                nk = rows.size
                d = tau * lam + (c - tau)
                w = 1.0 / d
                resid = Y[rows] - mu * u
                quad = (resid * resid * w).sum(axis=1)
                a_star = 0.5 * p + alpha
                b_star = beta + 0.5 * quad
                total += nk * (
                    -0.5 * p * LOG_2PI - 0.5 * np.log(d).sum() + gammaln(a_star) - gammaln(alpha) + alpha * lb
                ) - a_star * np.log(b_star).sum()
                if with_grad:
                    inv_b = 1.0 / b_star
                    g_mu = a_star * ((resid * (u * w)).sum(axis=1) * inv_b).sum()
                    lm1 = lam - 1.0
                    g_tau = -0.5 * nk * (lm1 * w).sum() + 0.5 * a_star * (
                        (resid * resid * (w * w * lm1)).sum(axis=1) * inv_b
                    ).sum()
                    g_alpha = nk * (digamma(a_star) - digamma(alpha) + lb) - np.log(b_star).sum()
                    g_beta = nk * alpha / beta - a_star * inv_b.sum()
                    grad[dim + 4 * j : dim + 4 * j + 4] = (g_mu, g_tau, g_alpha * alpha, g_beta * beta)
            return float(total), grad, cache

        return evaluate

    def _optimize_cluster(self, r):
        cfg = self.config
        floor = cfg.parameter_floor
        members = np.flatnonzero(self.cols0 == r)
        row_sets = {k: np.flatnonzero(self.rows0 == k) for k in range(self.K)}
        active = [k for k in range(self.K) if row_sets[k].size]
        dim = self.phi.shape[1]
        evaluate = self._cluster_objective(r, members, active, row_sets)

        max_log_phi = np.log(max(1e3 * float(self.dist.max()), 10.0))
        bounds = [(np.log(floor), max_log_phi)] * dim
        z0 = list(np.log(self.phi[r]))
        for k in active:
            bounds += [
                (None, None),
                (floor, self.c - floor),
                (np.log(floor), _LOG_ALPHA_MAX),
                (np.log(floor), _LOG_BETA_MAX),
            ]
            z0 += [self.mu[k, r], self.tau[k, r], np.log(self.alpha[k, r]), np.log(self.beta[k, r])]
        z0 = np.array(z0, dtype=float)
        lo = np.array([-np.inf if b[0] is None else b[0] for b in bounds])
        hi = np.array([np.inf if b[1] is None else b[1] for b in bounds])
        z0 = np.clip(z0, lo, hi)

        f0, _, _ = evaluate(z0, False)
        if not np.isfinite(f0):
            raise OptimizerFailure(f"non-finite objective at the initial point of column cluster {r + 1}")

        def fun(z):
            f, g, _ = evaluate(z, True)
            if not np.isfinite(f):
                return 1e300, np.zeros_like(z)
            for i in range(dim):
                h = 1e-6 * max(1.0, abs(z[i]))
                zp, zm = z.copy(), z.copy()
                zp[i] += h
                zm[i] -= h
                fp, fm = evaluate(zp, False)[0], evaluate(zm, False)[0]
                g[i] = (fp - fm) / (2.0 * h) if np.isfinite(fp) and np.isfinite(fm) else 0.0
            return -f, -g

        res = minimize(
            fun,
            z0,
            jac=True,
            method="L-BFGS-B",
            bounds=bounds,
            options={"maxiter": cfg.m_step_max_iter, "ftol": cfg.optimizer_tolerance},
        )
        z = np.clip(res.x, lo, hi)
        f1, _, _ = evaluate(z, False)
        if not (np.isfinite(f1) and f1 >= f0):
            z = z0
        self.phi[r] = np.exp(z[:dim])
        for j, k in enumerate(active):
            mu, tau, la, lb = z[dim + 4 * j : dim + 4 * j + 4]
            self.mu[k, r], self.tau[k, r] = mu, tau
            self.alpha[k, r], self.beta[k, r] = np.exp(la), np.exp(lb)
        self.kfull[r] = kernel_from_distances(self.kind, self.dist, self.phi[r])
        self.proj[r] = self._project(r, members)

    def m_step(self):
        for r in range(self.R):
            self._optimize_cluster(r)
        self.refresh_logdensities()


def _initial_labels(X, K, R, seed):
    from sklearn.cluster import KMeans

    n, p = X.shape
    rows0 = np.zeros(n, dtype=int)
    cols0 = np.zeros(p, dtype=int)
    if K > 1:
        rows0 = KMeans(n_clusters=K, n_init=10, random_state=seed).fit_predict(X)
    if R > 1:
        cols0 = KMeans(n_clusters=R, n_init=10, random_state=seed).fit_predict(X.T)
    return rows0.astype(int), cols0.astype(int)


def _perturb(labels, n_clusters, fraction, rng):
    labels = labels.copy()
    n_pick = int(round(fraction * labels.size))
    if n_clusters > 1 and n_pick:
        idx = rng.choice(labels.size, size=n_pick, replace=False)
        labels[idx] = rng.integers(n_clusters, size=n_pick)
    return labels


def _repair_columns(cols0, R, rng):
    """Give every empty column cluster one column taken from the largest cluster."""
    cols0 = cols0.copy()
    for r in range(R):
        if not np.any(cols0 == r):
            largest = int(np.argmax(np.bincount(cols0, minlength=R)))
            cols0[rng.choice(np.flatnonzero(cols0 == largest))] = r
    return cols0


def _check_fit_inputs(ds, spec):
    if spec.K > ds.n_rows:
        raise ConfigInvalid(f"K={spec.K} exceeds the number of rows ({ds.n_rows})")
    if spec.R > ds.n_cols:
        raise ConfigInvalid(f"R={spec.R} exceeds the number of columns ({ds.n_cols})")


@dataclass
class ChainOutcome:
    start: int
    trace: np.ndarray
    best_iteration: int
    best_loglik: float
    best: dict
    violations: list = field(default_factory=list)
    acceptance_rate: float = float("nan")


def run_chain(ds, spec: ModelSpec, config: FitConfig, start: int, init_rows, init_cols) -> ChainOutcome:
    """Run one CS-EM chain from the given initial labels."""
    rng = np.random.default_rng(config.seed + start)
    X = ds.values
    dist = ds.distances()
    rows0, cols0 = np.asarray(init_rows), np.asarray(init_cols)
    if start > 0:
        rows0 = _perturb(rows0, spec.K, config.init_perturbation, rng)
        cols0 = _perturb(cols0, spec.R, config.init_perturbation, rng)
    cols0 = _repair_columns(cols0, spec.R, rng)
    phi = np.array(spec.phi) if spec.phi is not None else default_phi(spec.kernel_kind, dist, cols0, spec.R)
    blocks = moment_parameters(X, rows0, cols0, spec.K, spec.R, spec.c_delta, config.parameter_floor)
    chain = _Chain(X, dist, spec.kernel_kind, spec.c_delta, rows0, cols0, blocks, phi, config)

    tol = config.monotonicity_tolerance
    violations = []
    trace = np.empty(config.max_iterations)
    best_ll, best_it, best = -np.inf, 0, chain.snapshot()
    previous = chain.loglik()
    for t in range(1, config.max_iterations + 1):
        chain.ce()
        after_ce = chain.loglik()
        if after_ce < previous - tol * max(1.0, abs(previous)):
            violations.append((start, t, "CE", previous, after_ce))
            logger.warning("start %d iteration %d: CE step decreased log-likelihood %.10g -> %.10g", start, t, previous, after_ce)
        chain.se(rng)
        after_se = chain.loglik()
        chain.m_step()
        ll = chain.loglik()
        if ll < after_se - tol * max(1.0, abs(after_se)):
            violations.append((start, t, "M", after_se, ll))
            logger.warning("start %d iteration %d: M step decreased log-likelihood %.10g -> %.10g", start, t, after_se, ll)
        trace[t - 1] = ll
        if ll > best_ll:
            best_ll, best_it, best = ll, t, chain.snapshot()
        previous = ll
        logger.debug("start %d iteration %d loglik %.6f", start, t, ll)
    rate = chain.n_accepted / chain.n_proposals if chain.n_proposals else float("nan")
    return ChainOutcome(start, trace, best_it, float(best_ll), best, violations, rate)


def resolve_n_jobs(n_jobs=None) -> int:
    if n_jobs is None:
        n_jobs = int(os.environ.get(N_JOBS_ENV, "1") or 1)
    return max(1, int(n_jobs))


def fit(ds: ExpressionDataset, spec: ModelSpec, config: FitConfig | None = None, n_jobs=None) -> FitResult:
    """Fit the model with ``config.n_starts`` independent chains and keep the best state.

    Chain ``s`` uses the random stream seeded with ``config.seed + s``; the
    first chain starts from k-means labels, the others from perturbed
    copies of them. Chains run in parallel when ``n_jobs > 1`` (default
    taken from the ``SPCOCLUST_N_JOBS`` environment variable).
    """
    from .selection import icl

    config = config or FitConfig()
    _check_fit_inputs(ds, spec)
    init_rows, init_cols = _initial_labels(ds.values, spec.K, spec.R, config.seed)
    n_jobs = resolve_n_jobs(n_jobs)
    starts = range(config.n_starts)
    if n_jobs > 1 and config.n_starts > 1:
        from joblib import Parallel, delayed

        outcomes = Parallel(n_jobs=n_jobs)(
            delayed(run_chain)(ds, spec, config, s, init_rows, init_cols) for s in starts
        )
    else:
        outcomes = [run_chain(ds, spec, config, s, init_rows, init_cols) for s in starts]
    winner = max(outcomes, key=lambda o: (o.best_loglik, -o.start))
    b = winner.best
    labels = CoClusterLabels.from_zero_based(b["rows0"], b["cols0"], spec.K, spec.R)
    return FitResult(
        labels=labels,
        mu=b["mu"],
        tau=b["tau"],
        alpha=b["alpha"],
        beta=b["beta"],
        phi=b["phi"],
        loglik_trace=winner.trace,
        best_iteration=winner.best_iteration,
        best_loglik=winner.best_loglik,
        icl=icl(winner.best_loglik, ds.n_rows, ds.n_cols, spec.K, spec.R, spec.dim_phi),
        seed=config.seed,
        n_starts=config.n_starts,
        kernel_kind=spec.kernel_kind,
        c_delta=spec.c_delta,
        start_best_logliks=tuple(o.best_loglik for o in outcomes),
        start_traces=tuple(o.trace for o in outcomes),
        best_start=winner.start,
        monotonicity_violations=tuple(v for o in outcomes for v in o.violations),
        se_acceptance_rate=float(np.nanmean([o.acceptance_rate for o in outcomes])),
    )


# -- single-step entry points ------------------------------------------------


def _labels0(labels):
    if isinstance(labels, CoClusterLabels):
        return labels.rows0, labels.cols0
    rows, cols = labels
    return np.asarray(rows, dtype=int), np.asarray(cols, dtype=int)


def _phi_array(phi, R):
    return np.array([np.atleast_1d(np.asarray(getattr(p, "values", p), dtype=float)) for p in phi]).reshape(R, -1)


def ce_step(ds, col_labels, theta, phi, caches) -> np.ndarray:
    """Row labels maximizing each row's density; ties go to the smallest cluster index."""
    cols0 = np.asarray(col_labels, dtype=int)
    check_caches(caches, cols0, phi)
    mu, tau, xi, alpha, beta = as_block_arrays(theta)
    total = 0.0
    for r, cache in enumerate(caches):
        proj = ProjectedCluster.build(ds.values, cache)
        total = total + cluster_logdensities(proj, mu[:, r], tau[:, r], xi[:, r], alpha[:, r], beta[:, r])
    return np.argmax(total, axis=1)


def _chain_from(ds, rows0, cols0, theta, phi, config, kernel_kind):
    mu, tau, xi, alpha, beta = as_block_arrays(theta)
    c_delta = float(np.mean(tau + xi))
    blocks = BlockGrid(mu, tau, alpha, beta, c_delta)
    return _Chain(ds.values, ds.distances(), kernel_kind, c_delta, rows0, cols0, blocks, _phi_array(phi, mu.shape[1]), config)


def se_step(ds, row_labels, col_labels, theta, phi, config: FitConfig, rng, kernel_kind=KernelKind.EXPONENTIAL):
    """Run ``config.se_repeats_per_iteration`` Metropolis-Hastings updates of the column labels."""
    chain = _chain_from(ds, row_labels, col_labels, theta, phi, config, kernel_kind)
    chain.se(rng)
    return chain.cols0.copy()


def m_step(ds, labels, theta_init, phi_init, model_spec: ModelSpec, config: FitConfig | None = None):
    """Maximize the classification log-likelihood over parameters for fixed labels.

    Returns ``(BlockGrid, phi, caches)``. Empty row clusters keep their
    incoming parameters.
    """
    config = config or FitConfig()
    rows0, cols0 = _labels0(labels)
    chain = _chain_from(ds, rows0, cols0, theta_init, phi_init, config, model_spec.kernel_kind)
    chain.m_step()
    return chain.blocks(), chain.phi.copy(), chain.caches()
