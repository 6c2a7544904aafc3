import numpy as np
import pytest

from spcoclust.core import BlockGrid, CoClusterLabels, ModelSpec
from spcoclust.estimation import FitConfig, _Chain, ce_step, fit, m_step, se_step
from spcoclust.exceptions import ConfigInvalid, StaleCache
from spcoclust.kernels import KernelKind, KernelParams, kernel_eigen, kernel_matrix
from spcoclust.likelihood import classification_loglik
from spcoclust.simulate import ScenarioConfig, generate_experiment


@pytest.fixture(scope="module")
def small_experiment():
    cfg = ScenarioConfig(row_sizes=[12, 12, 12], col_sizes=[14, 14, 14], seed=4,
                         kernels_per_r=[["exponential", [8.0]], ["rational_quadratic", [8.0, 2.0]], ["gaussian", [10.0]]])
    return generate_experiment(cfg)


def _caches(ds, cols0, phi, kind="exponential"):
    out = []
    for r in range(len(phi)):
        members = np.flatnonzero(cols0 == r)
        K = kernel_matrix(kind, ds.coords[members], phi[r])
        out.append(kernel_eigen(K, KernelParams(kind, phi[r]), r, members))
    return out


def _grid(K, R, seed=0):
    rng = np.random.default_rng(seed)
    return BlockGrid(rng.normal(0, 0.2, (K, R)), rng.uniform(1, 9, (K, R)), rng.uniform(1, 4, (K, R)), rng.uniform(0.5, 3, (K, R)))


@pytest.mark.parametrize("kind", list(KernelKind))
def test_objective_gradient_matches_finite_differences(small_experiment, kind):
    ds, truth = small_experiment
    rows0, cols0 = truth.row_labels - 1, truth.col_labels - 1
    dim = kind.n_params
    phi = np.full((3, dim), 6.0)
    chain = _Chain(ds.values, ds.distances(), kind, 10.0, rows0, cols0, _grid(3, 3), phi, FitConfig())
    members = np.flatnonzero(cols0 == 1)
    row_sets = {k: np.flatnonzero(rows0 == k) for k in range(3)}
    evaluate = chain._cluster_objective(1, members, [0, 1, 2], row_sets)
    rng = np.random.default_rng(0)
    z = np.concatenate([np.log(phi[1]), np.column_stack([rng.normal(0, .3, 3), rng.uniform(1, 9, 3), rng.normal(0, .5, 3), rng.normal(0, .5, 3)]).ravel()])
    _, grad, _ = evaluate(z, True)
    for i in range(dim, z.size):
        h = 1e-5 * max(1.0, abs(z[i]))
        zp, zm = z.copy(), z.copy()
        zp[i] += h
        zm[i] -= h
        fd = (evaluate(zp, False)[0] - evaluate(zm, False)[0]) / (2 * h)
        assert grad[i] == pytest.approx(fd, rel=1e-5, abs=1e-4)


def test_m_step_does_not_decrease(small_experiment):
    ds, truth = small_experiment
    labels = CoClusterLabels(truth.row_labels, truth.col_labels, 3, 3)
    theta0 = _grid(3, 3, seed=2)
    phi0 = [(5.0,), (5.0,), (5.0,)]
    before = classification_loglik(ds, labels, theta0, phi0, _caches(ds, labels.cols0, phi0))
    blocks, phi, caches = m_step(ds, labels, theta0, phi0, ModelSpec(3, 3))
    after = classification_loglik(ds, labels, blocks, [tuple(p) for p in phi], caches)
    assert after >= before
    assert np.all(blocks.tau >= 1e-4) and np.all(blocks.tau <= 10 - 1e-4)
    np.testing.assert_allclose(blocks.tau + blocks.xi, 10.0)


def test_m_step_keeps_empty_cluster_parameters(small_experiment):
    ds, truth = small_experiment
    rows0 = np.where(truth.row_labels == 3, 1, truth.row_labels - 1)  # cluster 3 empty
    theta0 = _grid(3, 3, seed=5)
    blocks, _, _ = m_step(ds, (rows0, truth.col_labels - 1), theta0, [(5.0,)] * 3, ModelSpec(3, 3))
    np.testing.assert_array_equal(blocks.mu[2], theta0.mu[2])
    np.testing.assert_array_equal(blocks.tau[2], theta0.tau[2])


def test_ce_step_argmax_and_ties(small_experiment):
    ds, truth = small_experiment
    cols0 = truth.col_labels - 1
    phi = [(5.0,)] * 3
    caches = _caches(ds, cols0, phi)
    same = BlockGrid(np.zeros((3, 3)), np.full((3, 3), 5.0), np.full((3, 3), 2.0), np.ones((3, 3)))
    assert np.all(ce_step(ds, cols0, same, phi, caches) == 0)
    # the labels returned maximize the classification log-likelihood for fixed columns
    theta = _grid(3, 3, seed=1)
    rows0 = ce_step(ds, cols0, theta, phi, caches)
    best = classification_loglik(ds, CoClusterLabels.from_zero_based(rows0, cols0, 3, 3), theta, phi, caches)
    rng = np.random.default_rng(0)
    for _ in range(20):
        other = rows0.copy()
        i = rng.integers(ds.n_rows)
        other[i] = (other[i] + 1) % 3
        ll = classification_loglik(ds, CoClusterLabels.from_zero_based(other, cols0, 3, 3), theta, phi, caches)
        assert ll <= best
    with pytest.raises(StaleCache):
        ce_step(ds, np.roll(cols0, 1), theta, phi, caches)


def test_se_step_keeps_clusters_non_empty(small_experiment):
    ds, truth = small_experiment
    cols = se_step(ds, truth.row_labels - 1, truth.col_labels - 1, _grid(3, 3), [(5.0,)] * 3,
                   FitConfig(se_repeats_per_iteration=200), np.random.default_rng(0))
    assert set(cols.tolist()) == {0, 1, 2}


def test_fit_is_deterministic_and_monotone(small_experiment):
    ds, _ = small_experiment
    cfg = FitConfig(max_iterations=6, se_repeats_per_iteration=20, n_starts=2, seed=3)
    a = fit(ds, ModelSpec(3, 3), cfg)
    b = fit(ds, ModelSpec(3, 3), cfg)
    assert a.labels == b.labels
    np.testing.assert_array_equal(a.loglik_trace, b.loglik_trace)
    assert a.monotonicity_violations == ()
    assert len(a.start_traces) == 2 and a.loglik_trace.size == 6
    assert a.best_loglik == max(a.start_best_logliks)
    assert a.best_loglik == pytest.approx(np.max(a.start_traces[a.best_start]))
    assert 1 <= a.best_iteration <= 6


def test_parallel_starts_match_serial(small_experiment):
    ds, _ = small_experiment
    cfg = FitConfig(max_iterations=3, se_repeats_per_iteration=10, n_starts=2, seed=1)
    serial = fit(ds, ModelSpec(3, 2), cfg, n_jobs=1)
    parallel = fit(ds, ModelSpec(3, 2), cfg, n_jobs=2)
    assert serial.labels == parallel.labels
    assert serial.best_loglik == parallel.best_loglik


def test_config_validation():
    with pytest.raises(ConfigInvalid):
        FitConfig(max_iterations=0)
    with pytest.raises(ConfigInvalid):
        FitConfig(move_m1_probability=1.5)
    with pytest.raises(ConfigInvalid):
        FitConfig(parameter_floor=0)


def test_too_many_clusters(small_experiment):
    ds, _ = small_experiment
    with pytest.raises(ConfigInvalid):
        fit(ds, ModelSpec(3, ds.n_cols + 1), FitConfig(max_iterations=1))
