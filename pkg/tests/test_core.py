import numpy as np
import pytest

from spcoclust.core import (
    BlockGrid,
    BlockParameters,
    CoClusterLabels,
    ExpressionDataset,
    ModelSpec,
    read_label_table,
)
from spcoclust.exceptions import DimensionMismatch, DuplicateColumnId, NonFiniteValue
from spcoclust.kernels import KernelKind


def test_dataset_is_read_only():
    ds = ExpressionDataset.from_arrays(np.ones((2, 3)), np.zeros((3, 2)) + np.arange(3)[:, None])
    with pytest.raises(ValueError):
        ds.values[0, 0] = 5.0
    assert ds.n_rows == 2 and ds.n_cols == 3
    assert ds.row_ids == ("gene1", "gene2")


def test_dataset_collects_all_violations():
    values = np.ones((2, 3))
    values[0, 1] = np.nan
    values[1, 2] = np.inf
    with pytest.raises(NonFiniteValue) as err:
        ExpressionDataset.from_arrays(values, np.zeros((3, 2)), col_ids=["a", "b", "a"])
    kinds = [type(v) for v in err.value.violations]
    assert kinds.count(NonFiniteValue) == 2 and DuplicateColumnId in kinds
    assert (err.value.row, err.value.col) == (0, 1)


def test_dataset_shape_checks():
    with pytest.raises(DimensionMismatch):
        ExpressionDataset.from_arrays(np.ones((2, 3)), np.zeros((2, 2)))
    with pytest.raises(DimensionMismatch):
        ExpressionDataset.from_arrays(np.ones((2, 1)), np.zeros((1, 2)))


def test_labels_roundtrip(tmp_path):
    labels = CoClusterLabels(np.array([1, 2, 2, 1]), np.array([2, 1, 3]), 2, 3)
    path = tmp_path / "labels.csv"
    labels.write(path, ["g1", "g2", "g3", "g4"], ["s1", "s2", "s3"])
    back, rids, cids = CoClusterLabels.read(path)
    assert back == labels
    assert rids == ["g1", "g2", "g3", "g4"] and cids == ["s1", "s2", "s3"]
    table, counts = read_label_table(path)
    assert counts == (2, 3)


def test_labels_invariants():
    with pytest.raises(ValueError):
        CoClusterLabels(np.array([1, 3]), np.array([1, 2]), 2, 2)
    with pytest.raises(ValueError):
        CoClusterLabels(np.array([1, 1]), np.array([1, 1]), 1, 2)  # empty column cluster
    lab = CoClusterLabels.from_zero_based([0, 1], [1, 0], 3, 2)  # empty row cluster is fine
    np.testing.assert_array_equal(lab.row_labels, [1, 2])
    np.testing.assert_array_equal(lab.cols0, [1, 0])


def test_block_parameters_constraint():
    b = BlockParameters.from_tau(0.0, 7.5, 2.0, 1.0)
    assert b.xi == 2.5 and b.snr == 3.0
    with pytest.raises(ValueError):
        BlockParameters(0.0, 5.0, 4.0, 1.0, 1.0)
    with pytest.raises(ValueError):
        BlockParameters.from_tau(0.0, 10.0, 1.0, 1.0)
    with pytest.raises(ValueError):
        BlockParameters.from_tau(0.0, 5.0, 0.0, 1.0)


def test_block_grid_roundtrip():
    grid = BlockGrid(np.zeros((2, 3)), np.full((2, 3), 4.0), np.ones((2, 3)), np.ones((2, 3)) * 2)
    assert grid.xi[1, 2] == 6.0
    back = BlockGrid.from_grid(grid.grid())
    np.testing.assert_array_equal(back.tau, grid.tau)


def test_model_spec():
    spec = ModelSpec(3, 2, "rq", phi=[(1.0, 2.0), (3.0, 1.0)])
    assert spec.kernel_kind is KernelKind.RATIONAL_QUADRATIC and spec.dim_phi == 2
    with pytest.raises(ValueError):
        ModelSpec(3, 2, "exponential", phi=[(1.0,)])
    with pytest.raises(ValueError):
        ModelSpec(0, 2)
