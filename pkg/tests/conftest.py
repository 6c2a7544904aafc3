import numpy as np
import pytest

from spcoclust.core import ExpressionDataset
from spcoclust.kernels import KernelKind, kernel_eigen, kernel_matrix


def dense_delta(K, tau, xi):
    return tau * K + xi * np.eye(K.shape[0])


def random_cache(rng, p, kind=KernelKind.EXPONENTIAL, theta=None):
    xy = rng.uniform(0, 10, size=(p, 2))
    theta = rng.uniform(0.5, 5.0) if theta is None else theta
    params = (theta,) if kind.n_params == 1 else (theta, 1.7)
    K = kernel_matrix(kind, xy, params)
    return K, kernel_eigen(K, columns=range(p))


@pytest.fixture
def tiny_dataset():
    rng = np.random.default_rng(7)
    n, p = 12, 8
    coords = np.column_stack([np.arange(p) * 1.0, np.zeros(p)])
    return ExpressionDataset.from_arrays(rng.normal(size=(n, p)), coords)


def pytest_terminal_summary(terminalreporter):
    acceptance = __import__("sys").modules.get("test_acceptance")
    lines = getattr(acceptance, "VERDICTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
