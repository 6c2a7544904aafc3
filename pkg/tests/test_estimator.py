import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from spcoclust.estimator import SpatialCoclustering
from spcoclust.simulate import ScenarioConfig, generate_experiment


@pytest.fixture(scope="module")
def data():
    ds, truth = generate_experiment(ScenarioConfig(row_sizes=[10, 10, 10], col_sizes=[10, 10, 10], seed=6,
                                                   kernels_per_r=[["exponential", [7.0]]] * 3))
    return np.array(ds.values), np.array(ds.coords), truth


def small(**kw):
    return SpatialCoclustering(max_iterations=4, se_repeats=10, n_starts=1, **kw)


def test_params_roundtrip():
    est = SpatialCoclustering(n_row_clusters=2, kernel="gaussian")
    params = est.get_params()
    assert params["n_row_clusters"] == 2 and params["kernel"] == "gaussian"
    est.set_params(n_col_clusters=4)
    assert clone(est).n_col_clusters == 4


def test_fit_attributes_and_predict(data):
    X, coords, _ = data
    est = small().fit(X, coords=coords)
    assert est.row_labels_.shape == (30,) and est.column_labels_.shape == (30,)
    assert est.row_labels_.min() >= 0 and est.row_labels_.max() < 3
    assert est.mu_.shape == (3, 3) and est.phi_.shape == (3, 1)
    np.testing.assert_allclose(est.tau_ + est.xi_, 10.0)
    # predicting the training rows is one more CE step from the fitted state
    pred = est.predict(X)
    assert pred.shape == (30,)
    assert np.array_equal(pred, np.argmax(est.row_logdensities(X), axis=1))
    with pytest.raises(ValueError):
        est.predict(X[:, :5])


def test_fit_predict_and_determinism(data):
    X, coords, _ = data
    a = small(random_state=2).fit_predict(X, coords=coords)
    b = small(random_state=2).fit(X, coords=coords).row_labels_
    np.testing.assert_array_equal(a, b)


def test_input_validation(data):
    X, coords, _ = data
    with pytest.raises(ValueError):
        small().fit(X)
    bad = X.copy()
    bad[0, 0] = np.nan
    with pytest.raises(ValueError):
        small().fit(bad, coords=coords)
    with pytest.raises(NotFittedError):
        small().predict(X)
