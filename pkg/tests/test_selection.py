import numpy as np
import pytest

from spcoclust.estimation import FitConfig
from spcoclust.kernels import KernelKind
from spcoclust.selection import SelectionRow, SelectionTable, icl, select
from spcoclust.simulate import ScenarioConfig, generate_experiment


def test_icl_by_hand():
    # n = p = 10, K = R = 2, one kernel parameter: penalty (16 + 2)/2 log 100
    want = -100.0 - 10 * np.log(2) - 10 * np.log(2) - 9 * np.log(100)
    assert icl(-100.0, 10, 10, 2, 2, 1) == pytest.approx(want, rel=1e-14)


def test_icl_penalty_grows_with_dimension():
    assert icl(0.0, 50, 40, 3, 3, 2) < icl(0.0, 50, 40, 3, 3, 1) < icl(0.0, 50, 40, 2, 3, 1)


def test_best_skips_failures_and_breaks_ties_in_grid_order():
    rows = [
        SelectionRow(2, 2, KernelKind.EXPONENTIAL, -10.0, -5.0),
        SelectionRow(3, 2, KernelKind.EXPONENTIAL, status="failed: OptimizerFailure"),
        SelectionRow(2, 3, KernelKind.GAUSSIAN, -9.0, -5.0),
    ]
    best = SelectionTable(rows).best()
    assert (best.K, best.R) == (2, 2)
    with pytest.raises(RuntimeError):
        SelectionTable([rows[1]]).best()


def test_table_roundtrip(tmp_path):
    table = SelectionTable([SelectionRow(2, 3, KernelKind.RATIONAL_QUADRATIC, -1234.5678901234567, -1300.1)])
    table.write(tmp_path / "t.csv")
    back = SelectionTable.read(tmp_path / "t.csv")
    assert back.rows[0].best_loglik == -1234.5678901234567
    assert back.rows[0].kernel is KernelKind.RATIONAL_QUADRATIC


def test_select_small_grid():
    ds, _ = generate_experiment(ScenarioConfig(row_sizes=[6, 6, 6], col_sizes=[7, 7, 7], seed=8))
    grid = [(1, 2, "exponential"), (2, 2, "gaussian"), (2, 3, "exponential")]
    best, table = select(ds, grid, FitConfig(max_iterations=2, se_repeats_per_iteration=5, n_starts=1))
    assert len(table.rows) == 3
    assert all(row.status == "ok" for row in table.rows)
    assert best.icl == max(row.icl for row in table.rows)
    with pytest.raises(ValueError):
        select(ds, [], FitConfig(max_iterations=1))
