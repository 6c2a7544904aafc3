import numpy as np
import pytest

from spcoclust.exceptions import ConfigInvalid, DegreesOfFreedomTooSmall, NotPositiveDefinite
from spcoclust.kernels import pairwise_distances
from spcoclust.simulate import (
    Scenario,
    ScenarioConfig,
    alternative_labels,
    generate_experiment,
    s5_nested_labels,
    sample_matrix_normal,
    sample_wishart,
    snr_to_tau_xi,
    synthetic_coords,
)


def test_wishart_moments():
    rng = np.random.default_rng(0)
    scale = np.array([[2.0, 0.5, 0.0], [0.5, 1.0, 0.3], [0.0, 0.3, 1.5]])
    df = 7
    draws = np.array([sample_wishart(df, scale, rng) for _ in range(20000)])
    np.testing.assert_allclose(draws.mean(axis=0), df * scale, atol=0.08)
    # Var(W_ij) = df (s_ij^2 + s_ii s_jj)
    var = df * (scale**2 + np.outer(np.diag(scale), np.diag(scale)))
    np.testing.assert_allclose(draws.var(axis=0), var, rtol=0.06)
    assert np.all(np.linalg.eigvalsh(draws[:50]) > 0)


def test_wishart_df_too_small():
    with pytest.raises(DegreesOfFreedomTooSmall):
        sample_wishart(2, np.eye(3), np.random.default_rng(0))
    with pytest.raises(NotPositiveDefinite):
        sample_wishart(5, -np.eye(3), np.random.default_rng(0))


def test_matrix_normal_covariance():
    rng = np.random.default_rng(1)
    Sigma = np.array([[1.0, 0.4], [0.4, 2.0]])
    Delta = np.array([[1.0, 0.5, 0.1], [0.5, 1.0, 0.5], [0.1, 0.5, 1.0]])
    M = np.arange(6.0).reshape(2, 3)
    draws = np.array([sample_matrix_normal(M, Sigma, Delta, rng) for _ in range(40000)])
    np.testing.assert_allclose(draws.mean(axis=0), M, atol=0.03)
    # Cov(vec_rowmajor(X)) = Sigma kron Delta
    flat = (draws - M).reshape(len(draws), -1)
    np.testing.assert_allclose(flat.T @ flat / len(draws), np.kron(Sigma, Delta), atol=0.06)
    with pytest.raises(NotPositiveDefinite):
        sample_matrix_normal(M, -Sigma, Delta, rng)


def test_snr_split():
    assert snr_to_tau_xi(0, 10) == (0.0, 10.0)
    tau, xi = snr_to_tau_xi(3, 10)
    assert (tau, xi) == pytest.approx((7.5, 2.5))
    assert tau / xi == pytest.approx(3)


def test_synthetic_patches_are_separated():
    coords, labels = synthetic_coords([30, 45, 12], np.random.default_rng(2), spacing=10.0)
    d = pairwise_distances(coords)
    same = labels[:, None] == labels[None, :]
    assert d[same].max() < d[~same].min()
    assert np.bincount(labels)[1:].tolist() == [30, 45, 12]
    off = d + np.eye(len(d)) * 1e9
    assert off.min() == pytest.approx(10.0)


def test_s1_zero_snr_moment():
    cfg = ScenarioConfig(snr_matrix=[[0, 0, 0]] * 3, row_sizes=[30, 30, 30], col_sizes=[40, 40, 40], seed=5)
    ds, truth = generate_experiment(cfg)
    # entries have variance c * Sigma_ii when the blocks are pure nugget
    expected = cfg.c_true * np.concatenate(truth.sigma_diag)
    row_var = (ds.values**2).mean(axis=1)
    assert row_var.mean() == pytest.approx(expected.mean(), rel=0.05)


def test_determinism_and_seed_sensitivity():
    a, _ = generate_experiment(ScenarioConfig(row_sizes=[10, 10, 10], col_sizes=[8, 8, 8], seed=9))
    b, _ = generate_experiment(ScenarioConfig(row_sizes=[10, 10, 10], col_sizes=[8, 8, 8], seed=9))
    c, _ = generate_experiment(ScenarioConfig(row_sizes=[10, 10, 10], col_sizes=[8, 8, 8], seed=10))
    assert np.array_equal(a.values, b.values) and np.array_equal(a.coords, b.coords)
    assert not np.array_equal(a.values, c.values)


@pytest.mark.parametrize("scenario", ["S1", "S2", "S3", "S4"])
def test_block_scenarios_invariants(scenario):
    cfg = ScenarioConfig(scenario=scenario, row_sizes=[12, 9, 15], col_sizes=[10, 14, 8], seed=3)
    ds, truth = generate_experiment(cfg)
    assert ds.values.shape == (36, 32)
    assert np.bincount(truth.row_labels)[1:].tolist() == [12, 9, 15]
    assert np.bincount(truth.col_labels)[1:].tolist() == [10, 14, 8]
    assert np.all(np.isfinite(ds.values))
    np.testing.assert_allclose(truth.tau + truth.xi, cfg.c_true)
    assert len(truth.kernels) == 3


def test_s4_mixing_validation():
    with pytest.raises(ConfigInvalid):
        ScenarioConfig(scenario="S4", s4_lambda_s=0.5, s4_lambda_b=0.5)
    cfg = ScenarioConfig(scenario="S4", s4_lambda_s=1.0, s4_lambda_b=0.0, row_sizes=[5, 5, 5], col_sizes=[6, 6, 6], seed=1)
    base = ScenarioConfig(scenario="S1", row_sizes=[5, 5, 5], col_sizes=[6, 6, 6], seed=1)
    # with no nuisance weight the signal part equals the S1 draw
    np.testing.assert_array_equal(generate_experiment(cfg)[0].values, generate_experiment(base)[0].values)


def test_s5_nested_layout():
    nested = s5_nested_labels(4)
    assert nested.shape == (24, 3)
    for r, sizes in enumerate(([8, 8, 8], [8, 8, 8], [4, 8, 12])):
        assert np.bincount(nested[:, r])[1:].tolist() == sizes
    alt = alternative_labels(nested)
    assert sorted(np.bincount(alt)[1:].tolist()) == [4] * 6
    cfg = ScenarioConfig(scenario=Scenario.S5, s5_unit=5, col_sizes=[10, 12, 9], seed=2)
    ds, truth = generate_experiment(cfg)
    assert ds.values.shape == (30, 31)
    assert truth.row_labels is None
    assert len(np.unique(truth.alt_row_labels)) == 6


def test_config_validation():
    with pytest.raises(ConfigInvalid):
        ScenarioConfig(snr_matrix=[[0, 1], [1, 0]])
    with pytest.raises(ConfigInvalid):
        ScenarioConfig(snr_matrix=[[0, 1, -1], [1, 0, 1], [1, 1, 0]])
    with pytest.raises(ConfigInvalid):
        ScenarioConfig(col_sizes=[10, 0, 10])
    with pytest.raises(ConfigInvalid):
        ScenarioConfig(scenario="S5", K_true=2, snr_matrix=[[0, 1, 1], [1, 0, 1]])
