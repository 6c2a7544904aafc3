"""Domain types shared by every module: datasets, labels, block parameters."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .exceptions import (
    DatasetError,
    DimensionMismatch,
    DuplicateColumnId,
    NonFiniteValue,
    ParseError,
)
from .kernels import KernelKind, KernelParams

#: tolerance on the identifiability constraint tau + xi = c_delta
CONSTRAINT_TOL = 1e-10


def _frozen(a, dtype=float):
    a = np.array(a, dtype=dtype, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class ExpressionDataset:
    """Real matrix with one 2-D site per column.

    Parameters
    ----------
    values : ndarray of shape (n_rows, n_cols)
        Normalized expression, one gene per row and one spot per column.
    coords : ndarray of shape (n_cols, 2)
        Planar location of each spot.
    row_ids, col_ids : sequence of str
        Gene and spot identifiers.
    """

    values: np.ndarray
    coords: np.ndarray
    row_ids: tuple
    col_ids: tuple

    def __post_init__(self):
        object.__setattr__(self, "values", _frozen(np.atleast_2d(self.values)))
        object.__setattr__(self, "coords", _frozen(self.coords))
        object.__setattr__(self, "row_ids", tuple(str(r) for r in self.row_ids))
        object.__setattr__(self, "col_ids", tuple(str(c) for c in self.col_ids))

    @classmethod
    def from_arrays(cls, values, coords, row_ids=None, col_ids=None, validate=True):
        values = np.asarray(values, dtype=float)
        n, p = values.shape
        if row_ids is None:
            row_ids = [f"gene{i + 1}" for i in range(n)]
        if col_ids is None:
            col_ids = [f"spot{j + 1}" for j in range(p)]
        ds = cls(values=values, coords=coords, row_ids=row_ids, col_ids=col_ids)
        return validate_dataset(ds) if validate else ds

    @property
    def n_rows(self) -> int:
        return self.values.shape[0]

    @property
    def n_cols(self) -> int:
        return self.values.shape[1]

    def distances(self) -> np.ndarray:
        """Euclidean distance matrix between all spots (raw units)."""
        diff = self.coords[:, None, :] - self.coords[None, :, :]
        return np.sqrt((diff**2).sum(axis=-1))


def validate_dataset(ds: ExpressionDataset) -> ExpressionDataset:
    """Check the dataset invariants and return it unchanged.

    Raises
    ------
    DatasetError
        The first violation found; ``err.violations`` lists all of them.
    """
    violations: list[Exception] = []
    values, coords = ds.values, ds.coords
    if values.ndim != 2:
        violations.append(DimensionMismatch(f"values must be 2-D, got {values.ndim}-D"))
    else:
        n, p = values.shape
        if n < 1:
            violations.append(DimensionMismatch("at least one row is required"))
        if p < 2:
            violations.append(DimensionMismatch("at least two columns are required"))
        if coords.ndim != 2 or coords.shape[1] != 2 or coords.shape[0] != p:
            violations.append(
                DimensionMismatch(f"coords shape {coords.shape} does not match {p} columns")
            )
        elif not np.all(np.isfinite(coords)):
            violations.append(DimensionMismatch("coordinates must be finite"))
        if len(ds.row_ids) != n:
            violations.append(DimensionMismatch(f"{len(ds.row_ids)} row ids for {n} rows"))
        if len(ds.col_ids) != p:
            violations.append(DimensionMismatch(f"{len(ds.col_ids)} column ids for {p} columns"))
        for i, j in np.argwhere(~np.isfinite(values)):
            violations.append(NonFiniteValue(i, j))
    seen = set()
    for cid in ds.col_ids:
        if cid in seen:
            violations.append(DuplicateColumnId(cid))
        seen.add(cid)
    if violations:
        first = violations[0]
        first.violations = violations
        raise first
    return ds


@dataclass(frozen=True, eq=False)
class CoClusterLabels:
    """Row and column cluster assignments, stored 1-based (values in 1..K, 1..R)."""

    row_labels: np.ndarray
    col_labels: np.ndarray
    n_row_clusters: int
    n_col_clusters: int

    def __post_init__(self):
        rows = _frozen(self.row_labels, dtype=int)
        cols = _frozen(self.col_labels, dtype=int)
        object.__setattr__(self, "row_labels", rows)
        object.__setattr__(self, "col_labels", cols)
        K, R = int(self.n_row_clusters), int(self.n_col_clusters)
        if rows.size and (rows.min() < 1 or rows.max() > K):
            raise ValueError(f"row labels must lie in 1..{K}")
        if cols.size and (cols.min() < 1 or cols.max() > R):
            raise ValueError(f"column labels must lie in 1..{R}")
        missing = set(range(1, R + 1)) - set(cols.tolist())
        if missing:
            raise ValueError(f"empty column clusters: {sorted(missing)}")

    @classmethod
    def from_zero_based(cls, rows, cols, K, R):
        return cls(np.asarray(rows) + 1, np.asarray(cols) + 1, K, R)

    @property
    def rows0(self) -> np.ndarray:
        return self.row_labels - 1

    @property
    def cols0(self) -> np.ndarray:
        return self.col_labels - 1

    def __eq__(self, other):
        if not isinstance(other, CoClusterLabels):
            return NotImplemented
        return (
            self.n_row_clusters == other.n_row_clusters
            and self.n_col_clusters == other.n_col_clusters
            and np.array_equal(self.row_labels, other.row_labels)
            and np.array_equal(self.col_labels, other.col_labels)
        )

    def write(self, path, row_ids: Sequence[str] | None = None, col_ids: Sequence[str] | None = None):
        """Write labels as ``axis,id,label`` rows preceded by a cluster-count comment."""
        row_ids = row_ids if row_ids is not None else [str(i + 1) for i in range(self.row_labels.size)]
        col_ids = col_ids if col_ids is not None else [str(j + 1) for j in range(self.col_labels.size)]
        with open(path, "w", newline="") as fh:
            fh.write(f"# n_row_clusters={self.n_row_clusters} n_col_clusters={self.n_col_clusters}\n")
            w = csv.writer(fh)
            w.writerow(["axis", "id", "label"])
            for rid, lab in zip(row_ids, self.row_labels):
                w.writerow(["row", rid, int(lab)])
            for cid, lab in zip(col_ids, self.col_labels):
                w.writerow(["col", cid, int(lab)])

    @classmethod
    def read(cls, path):
        """Inverse of :meth:`write`. Returns ``(labels, row_ids, col_ids)``."""
        labels, counts = read_label_table(path)
        if counts is None:
            raise ParseError(f"{path}: missing cluster-count header")
        (row_ids, rows), (col_ids, cols) = labels["row"], labels["col"]
        return cls(rows, cols, counts[0], counts[1]), row_ids, col_ids


def read_label_table(path):
    """Parse an ``axis,id,label`` file into ``{axis: (ids, labels)}``.

    Labels may use any integer alphabet. Returns the mapping and the
    ``(K, R)`` pair from the header comment, or None when absent.
    """
    out = {"row": ([], []), "col": ([], [])}
    counts = None
    with open(path, newline="") as fh:
        lines = fh.read().splitlines()
    body = []
    for lineno, line in enumerate(lines, start=1):
        if line.startswith("#"):
            parts = dict(tok.split("=", 1) for tok in line[1:].split() if "=" in tok)
            if "n_row_clusters" in parts and "n_col_clusters" in parts:
                counts = (int(parts["n_row_clusters"]), int(parts["n_col_clusters"]))
            continue
        if line.strip():
            body.append((lineno, line))
    if not body or [c.strip() for c in body[0][1].split(",")] != ["axis", "id", "label"]:
        raise ParseError(f"{path}: expected header 'axis,id,label'", line=body[0][0] if body else 1)
    for (lineno, _), rec in zip(body[1:], csv.reader([b[1] for b in body[1:]])):
        if len(rec) != 3 or rec[0] not in out:
            raise ParseError(f"{path}: malformed label record", line=lineno)
        try:
            lab = int(rec[2])
        except ValueError:
            raise ParseError(f"{path}: label {rec[2]!r} is not an integer", line=lineno, column=3) from None
        out[rec[0]][0].append(rec[1])
        out[rec[0]][1].append(lab)
    return {k: (v[0], np.array(v[1], dtype=int)) for k, v in out.items()}, counts


@dataclass(frozen=True)
class BlockParameters:
    """Parameters of one (row cluster, column cluster) block.

    ``tau`` and ``xi`` always sum to ``c_delta``; use :meth:`from_tau` to
    build an instance from the spatial share alone.
    """

    mu: float
    tau: float
    xi: float
    alpha: float
    beta: float
    c_delta: float = 10.0

    def __post_init__(self):
        if not (0 < self.tau < self.c_delta and 0 < self.xi < self.c_delta):
            raise ValueError(f"tau={self.tau}, xi={self.xi} must lie in (0, {self.c_delta})")
        if abs(self.tau + self.xi - self.c_delta) > CONSTRAINT_TOL:
            raise ValueError("tau + xi must equal c_delta")
        if self.alpha <= 0 or self.beta <= 0:
            raise ValueError("alpha and beta must be positive")

    @classmethod
    def from_tau(cls, mu, tau, alpha, beta, c_delta=10.0):
        return cls(float(mu), float(tau), float(c_delta - tau), float(alpha), float(beta), float(c_delta))

    @property
    def snr(self) -> float:
        """Spatial signal-to-noise ratio tau / xi."""
        return self.tau / self.xi


@dataclass(frozen=True, eq=False)
class BlockGrid:
    """All block parameters as ``(K, R)`` arrays; ``xi`` is implied by the constraint."""

    mu: np.ndarray
    tau: np.ndarray
    alpha: np.ndarray
    beta: np.ndarray
    c_delta: float = 10.0

    def __post_init__(self):
        for name in ("mu", "tau", "alpha", "beta"):
            object.__setattr__(self, name, _frozen(np.atleast_2d(getattr(self, name))))

    @property
    def xi(self) -> np.ndarray:
        return self.c_delta - self.tau

    @property
    def shape(self):
        return self.mu.shape

    def block(self, k, r) -> BlockParameters:
        return BlockParameters.from_tau(
            self.mu[k, r], self.tau[k, r], self.alpha[k, r], self.beta[k, r], self.c_delta
        )

    def grid(self):
        K, R = self.shape
        return [[self.block(k, r) for r in range(R)] for k in range(K)]

    @classmethod
    def from_grid(cls, grid, c_delta=None):
        c = grid[0][0].c_delta if c_delta is None else c_delta
        get = lambda n: np.array([[getattr(b, n) for b in row] for row in grid], dtype=float)  # noqa: E731
        return cls(get("mu"), get("tau"), get("alpha"), get("beta"), c)


@dataclass(frozen=True)
class ModelSpec:
    """Model dimensions, kernel family and identifiability constant.

    ``phi`` holds one kernel parameter vector per column cluster; when None
    the estimation driver picks a data-driven starting value.
    """

    K: int
    R: int
    kernel_kind: KernelKind = KernelKind.EXPONENTIAL
    c_delta: float = 10.0
    phi: tuple | None = None

    def __post_init__(self):
        object.__setattr__(self, "kernel_kind", KernelKind.parse(self.kernel_kind))
        if int(self.K) < 1 or int(self.R) < 1:
            raise ValueError("K and R must be positive")
        if not self.c_delta > 0:
            raise ValueError("c_delta must be positive")
        if self.phi is not None:
            phi = tuple(tuple(float(v) for v in np.atleast_1d(p)) for p in self.phi)
            if len(phi) != self.R:
                raise ValueError(f"expected {self.R} kernel parameter vectors, got {len(phi)}")
            for p in phi:
                KernelParams(self.kernel_kind, p)
            object.__setattr__(self, "phi", phi)

    @property
    def dim_phi(self) -> int:
        return self.kernel_kind.n_params


@dataclass(frozen=True, eq=False)
class FitResult:
    """Best state found by the estimation driver, plus traces and diagnostics.

    Block parameters are stored as ``(K, R)`` arrays; :attr:`theta` exposes
    them as a grid of :class:`BlockParameters`.
    """

    labels: CoClusterLabels
    mu: np.ndarray
    tau: np.ndarray
    alpha: np.ndarray
    beta: np.ndarray
    phi: np.ndarray
    loglik_trace: np.ndarray
    best_iteration: int
    best_loglik: float
    icl: float
    seed: int
    n_starts: int
    kernel_kind: KernelKind = KernelKind.EXPONENTIAL
    c_delta: float = 10.0
    start_best_logliks: tuple = ()
    start_traces: tuple = ()
    best_start: int = 0
    monotonicity_violations: tuple = ()
    se_acceptance_rate: float = float("nan")
    diagnostics: dict = field(default_factory=dict)

    @property
    def xi(self) -> np.ndarray:
        return self.c_delta - self.tau

    @property
    def snr(self) -> np.ndarray:
        return self.tau / self.xi

    @property
    def blocks(self) -> BlockGrid:
        return BlockGrid(self.mu, self.tau, self.alpha, self.beta, self.c_delta)

    @property
    def theta(self):
        """K x R nested list of :class:`BlockParameters`."""
        return self.blocks.grid()
