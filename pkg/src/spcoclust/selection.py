"""Integrated classification likelihood and model-selection sweeps."""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field

import numpy as np

from .core import ModelSpec
from .kernels import KernelKind

logger = logging.getLogger(__name__)


def icl(best_loglik, n, p, K, R, dim_phi) -> float:
    """ICL = logL - n log K - p log R - (4KR + dim_phi R)/2 log(np).

    The label terms come from uniform priors 1/K and 1/R over the configured
    cluster counts, so empty clusters still count.
    """
    n_params = 4 * K * R + dim_phi * R
    return float(best_loglik - n * np.log(K) - p * np.log(R) - 0.5 * n_params * np.log(n * p))


@dataclass
class SelectionRow:
    K: int
    R: int
    kernel: KernelKind
    best_loglik: float = float("nan")
    icl: float = float("nan")
    status: str = "ok"
    fit: object = field(default=None, repr=False)


@dataclass
class SelectionTable:
    rows: list

    def best(self) -> SelectionRow:
        ok = [row for row in self.rows if row.status == "ok" and np.isfinite(row.icl)]
        if not ok:
            raise RuntimeError("no configuration was fitted successfully")
        # first maximum in grid order on exact ties
        return max(ok, key=lambda row: (row.icl, -self.rows.index(row)))

    def write(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["K", "R", "kernel", "loglik", "icl", "status"])
            for row in self.rows:
                w.writerow([row.K, row.R, row.kernel.value, repr(float(row.best_loglik)), repr(float(row.icl)), row.status])

    @classmethod
    def read(cls, path):
        rows = []
        with open(path, newline="") as fh:
            for rec in csv.DictReader(fh):
                rows.append(
                    SelectionRow(
                        int(rec["K"]), int(rec["R"]), KernelKind.parse(rec["kernel"]),
                        float(rec["loglik"]), float(rec["icl"]), rec["status"],
                    )
                )
        return cls(rows)


def _fit_one(ds, K, R, kind, config, c_delta):
    from .estimation import fit

    spec = ModelSpec(K=K, R=R, kernel_kind=kind, c_delta=c_delta)
    try:
        result = fit(ds, spec, config, n_jobs=1)
    except Exception as exc:  # recorded in the table, excluded from the argmax
        logger.warning("fit K=%d R=%d %s failed: %s", K, R, kind.value, exc)
        return SelectionRow(K, R, kind, status=f"failed: {type(exc).__name__}")
    return SelectionRow(K, R, kind, result.best_loglik, result.icl, "ok", result)


def select(ds, grid, config=None, c_delta=10.0, n_jobs=None):
    """Fit every (K, R, kernel) configuration and return the ICL-best fit and the table.

    Parameters
    ----------
    ds : ExpressionDataset
    grid : iterable of (K, R, kernel_kind)
    config : FitConfig, optional
        Shared by all fits, so each configuration uses the same seeds.
    n_jobs : int, optional
        Number of configurations fitted concurrently.
    """
    from .estimation import FitConfig, resolve_n_jobs

    config = config or FitConfig()
    grid = [(int(K), int(R), KernelKind.parse(kind)) for K, R, kind in grid]
    if not grid:
        raise ValueError("the selection grid is empty")
    n_jobs = resolve_n_jobs(n_jobs)
    if n_jobs > 1 and len(grid) > 1:
        from joblib import Parallel, delayed

        rows = Parallel(n_jobs=n_jobs)(delayed(_fit_one)(ds, K, R, kind, config, c_delta) for K, R, kind in grid)
    else:
        rows = [_fit_one(ds, K, R, kind, config, c_delta) for K, R, kind in grid]
    table = SelectionTable(list(rows))
    return table.best().fit, table
