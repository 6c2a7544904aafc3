"""Synthetic spatial experiments with a known block structure.

Blocks are matrix-variate normal with a Wishart-drawn row covariance and a
column covariance ``tau K_r + xi I`` built from a per-column-cluster kernel.
Scenarios:

* ``S1``-``S3``: K x R blocks; they differ only in the SNR layout, which is
  always explicit configuration.
* ``S4``: an S1-type signal plus a nuisance matrix correlated across all
  rows and all spots, mixed as ``lambda_s X_s + lambda_b X_b``.
* ``S5``: row clusters drawn independently inside every column cluster,
  with alternative labels grouping rows that share all their clusters.
"""

from __future__ import annotations

import enum
from dataclasses import asdict, dataclass, field

import numpy as np

from .core import ExpressionDataset
from .exceptions import ConfigInvalid, DegreesOfFreedomTooSmall, NotPositiveDefinite
from .kernels import KernelKind, KernelParams, kernel_from_distances, pairwise_distances

#: default kernel per column cluster, for clusters of REFERENCE_CLUSTER_SIZE spots
DEFAULT_KERNELS = (
    (KernelKind.EXPONENTIAL, (50.0,)),
    (KernelKind.RATIONAL_QUADRATIC, (50.0, 2.0)),
    (KernelKind.GAUSSIAN, (70.0,)),
)
REFERENCE_CLUSTER_SIZE = 200
#: distance between neighbouring synthetic spots
DEFAULT_SPACING = 10.0


class Scenario(str, enum.Enum):
    S1 = "S1"
    S2 = "S2"
    S3 = "S3"
    S4 = "S4"
    S5 = "S5"
    CUSTOM = "Custom"


@dataclass
class ScenarioConfig:
    """Everything needed to regenerate one experiment from its seed.

    ``row_sizes`` and ``col_sizes`` give the cluster sizes (S5 derives the
    nested row clusters from ``s5_unit`` unless ``nested_row_labels`` is
    given). ``kernels_per_r`` entries are ``(kind, params)``; when None the
    exponential / rational quadratic / gaussian defaults are used, with
    length-scales shrunk by ``sqrt(p_r / 200)`` for synthetic coordinates.
    """

    scenario: Scenario = Scenario.S1
    K_true: int = 3
    R_true: int = 3
    row_sizes: list = field(default_factory=lambda: [50, 50, 50])
    col_sizes: list = field(default_factory=lambda: [50, 50, 50])
    snr_matrix: list = field(default_factory=lambda: [[0, 1, 3], [3, 0, 1], [1, 3, 0]])
    c_true: float = 10.0
    kernels_per_r: list | None = None
    wishart_specs: list | None = None
    coords_source: str = "synthetic"
    coords_spacing: float = DEFAULT_SPACING
    s4_lambda_s: float = float(np.sqrt(0.5))
    s4_lambda_b: float = float(np.sqrt(0.5))
    s4_sigma_b: float = 50.0
    s4_wishart_scale: float = 0.015
    s5_unit: int = 100
    nested_row_labels: list | None = None
    seed: int = 0

    def __post_init__(self):
        self.scenario = Scenario(self.scenario)
        self.validate()

    def validate(self):
        K, R = int(self.K_true), int(self.R_true)
        snr = np.asarray(self.snr_matrix, dtype=float)
        if snr.shape != (K, R):
            raise ConfigInvalid(f"snr_matrix must be {K} x {R}, got {snr.shape}")
        if np.any(snr < 0) or not np.all(np.isfinite(snr)):
            raise ConfigInvalid("snr entries must be finite and >= 0")
        if len(self.col_sizes) != R or min(self.col_sizes) < 1:
            raise ConfigInvalid(f"col_sizes needs {R} positive entries")
        if self.scenario is not Scenario.S5 and (len(self.row_sizes) != K or min(self.row_sizes) < 1):
            raise ConfigInvalid(f"row_sizes needs {K} positive entries")
        if not self.c_true > 0:
            raise ConfigInvalid("c_true must be positive")
        if self.scenario is Scenario.S4:
            if self.s4_lambda_s < 0 or self.s4_lambda_b < 0:
                raise ConfigInvalid("S4 mixing weights must be >= 0")
            if abs(self.s4_lambda_s**2 + self.s4_lambda_b**2 - 1.0) > 1e-10:
                raise ConfigInvalid("S4 requires lambda_s^2 + lambda_b^2 = 1")
        if self.scenario is Scenario.S5 and self.nested_row_labels is None and (K, R) != (3, 3):
            raise ConfigInvalid("the built-in S5 layout needs K_true = R_true = 3; pass nested_row_labels")
        if self.kernels_per_r is not None and len(self.kernels_per_r) != R:
            raise ConfigInvalid(f"kernels_per_r needs {R} entries")
        if self.wishart_specs is not None:
            for spec in self.wishart_specs:
                if int(spec.get("df_offset", 0)) < 0:
                    raise ConfigInvalid("Wishart df must be at least the matrix dimension")

    def to_dict(self):
        out = asdict(self)
        out["scenario"] = self.scenario.value
        if self.kernels_per_r is not None:
            out["kernels_per_r"] = [[KernelKind.parse(k).value, list(v)] for k, v in self.kernels_per_r]
        return out


@dataclass
class GroundTruth:
    """Generating labels (1-based) and parameters of an experiment."""

    row_labels: np.ndarray | None
    col_labels: np.ndarray
    nested_row_labels: np.ndarray | None = None
    alt_row_labels: np.ndarray | None = None
    tau: np.ndarray | None = None
    xi: np.ndarray | None = None
    kernels: list = field(default_factory=list)
    sigma_diag: list = field(default_factory=list)
    config: dict = field(default_factory=dict)


# -- samplers -----------------------------------------------------------------


def _cholesky(a, name):
    try:
        return np.linalg.cholesky(a)
    except np.linalg.LinAlgError:
        raise NotPositiveDefinite(f"{name} is not positive definite") from None


def sample_wishart(df, scale, rng) -> np.ndarray:
    """Draw from W(df, scale) with the Bartlett decomposition.

    ``L A A^T L^T`` with ``L`` the Cholesky factor of ``scale`` and ``A``
    lower triangular: ``A_ii^2 ~ chi2(df - i)``, ``A_ij ~ N(0, 1)`` below
    the diagonal.
    """
    scale = np.atleast_2d(np.asarray(scale, dtype=float))
    d = scale.shape[0]
    if df < d:
        raise DegreesOfFreedomTooSmall(f"df={df} is below the matrix dimension {d}")
    L = _cholesky(scale, "Wishart scale")
    A = np.zeros((d, d))
    A[np.diag_indices(d)] = np.sqrt(rng.chisquare(df - np.arange(d)))
    il = np.tril_indices(d, -1)
    A[il] = rng.standard_normal(il[0].size)
    LA = L @ A
    W = LA @ LA.T
    return 0.5 * (W + W.T)


def sample_matrix_normal(M, Sigma, Delta, rng) -> np.ndarray:
    """Draw ``M + A E B^T`` with ``A A^T = Sigma``, ``B B^T = Delta`` and iid normal ``E``."""
    M = np.atleast_2d(np.asarray(M, dtype=float))
    A = _cholesky(np.atleast_2d(Sigma), "row covariance")
    B = _cholesky(np.atleast_2d(Delta), "column covariance")
    if A.shape[0] != M.shape[0] or B.shape[0] != M.shape[1]:
        raise ValueError("covariance orders do not match the mean matrix")
    return _matrix_normal_factors(M, A, B, rng)


def _matrix_normal_factors(M, A, B, rng):
    E = rng.standard_normal(M.shape)
    return M + A @ E @ B.T


def snr_to_tau_xi(snr, c):
    """Split ``c`` into (tau, xi) with tau / xi = snr."""
    if snr < 0 or not c > 0:
        raise ValueError("snr must be >= 0 and c > 0")
    xi = c / (1.0 + snr)
    return c - xi, xi


def _hex_patch(size, spacing, center_jitter):
    """The ``size`` hexagonal-lattice points nearest to a (jittered) origin."""
    half = int(np.ceil(np.sqrt(size))) + 2
    i, j = np.meshgrid(np.arange(-half, half + 1), np.arange(-half, half + 1), indexing="ij")
    i, j = i.ravel(), j.ravel()
    pts = np.column_stack([(i + 0.5 * (j % 2)) * spacing, j * spacing * np.sqrt(3) / 2])
    d = np.hypot(*(pts - center_jitter).T)
    order = np.lexsort((np.arange(d.size), np.round(d, 9)))
    return pts[order[:size]]


def synthetic_coords(cluster_sizes, rng, spacing=DEFAULT_SPACING):
    """Contiguous hexagonal patches, one per cluster, laid out along the x axis.

    Consecutive patches are separated by more than a patch diameter, so
    every within-patch distance is smaller than every between-patch one.
    Returns ``(coords, labels)`` with 1-based labels.
    """
    patches = []
    for size in cluster_sizes:
        if size < 1:
            raise ValueError("cluster sizes must be >= 1")
        patches.append(_hex_patch(int(size), spacing, rng.uniform(0.0, spacing, size=2)))
    coords, labels = [], []
    offset = 0.0
    for r, patch in enumerate(patches):
        diam = float(pairwise_distances(patch).max()) if len(patch) > 1 else 0.0
        shifted = patch - patch.min(axis=0) + np.array([offset, 0.0])
        coords.append(shifted)
        labels.append(np.full(len(patch), r + 1))
        offset = shifted[:, 0].max() + diam + 2.0 * spacing + spacing
    return np.vstack(coords), np.concatenate(labels)


def _read_coords_file(path):
    import csv

    coords, labels = [], []
    with open(path, newline="") as fh:
        for rec in csv.DictReader(fh):
            coords.append((float(rec["x"]), float(rec["y"])))
            labels.append(int(rec["cluster"]))
    return np.array(coords), np.array(labels)


# -- experiment assembly ---------------------------------------------------------


def _kernels(cfg: ScenarioConfig, col_sizes, synthetic):
    out = []
    for r in range(cfg.R_true):
        if cfg.kernels_per_r is not None:
            kind, params = cfg.kernels_per_r[r]
            out.append(KernelParams(kind, params))
            continue
        kind, params = DEFAULT_KERNELS[r % len(DEFAULT_KERNELS)]
        params = np.array(params)
        if synthetic:
            params[0] *= np.sqrt(col_sizes[r] / REFERENCE_CLUSTER_SIZE)
        out.append(KernelParams(kind, params))
    return out


def _row_covariance(k, size, rng, specs, first):
    """Row covariance for row cluster ``k`` following the additive-df pattern.

    Cluster 1: W(n+10, 0.03 I); cluster 2: W(n+30, 0.05 I); cluster 3:
    W(n, S / 150) where S is cluster 1's draw when it has the same order,
    otherwise a fresh W(n+10, 0.03 I). Further clusters cycle the first two.
    """
    if specs is not None:
        spec = specs[k % len(specs)]
        return sample_wishart(size + int(spec.get("df_offset", 0)), float(spec["scale"]) * np.eye(size), rng)
    pattern = k % 3
    if pattern == 0:
        return sample_wishart(size + 10, 0.03 * np.eye(size), rng)
    if pattern == 1:
        return sample_wishart(size + 30, 0.05 * np.eye(size), rng)
    base = first if first is not None and first.shape[0] == size else sample_wishart(size + 10, 0.03 * np.eye(size), rng)
    return sample_wishart(size, base / 150.0, rng)


def _column_setup(cfg: ScenarioConfig, rng):
    if cfg.coords_source == "synthetic":
        coords, col_labels = synthetic_coords(cfg.col_sizes, rng, cfg.coords_spacing)
        synthetic = True
    else:
        coords, col_labels = _read_coords_file(cfg.coords_source)
        synthetic = False
        sizes = np.bincount(col_labels - 1, minlength=cfg.R_true)
        if len(sizes) != cfg.R_true or np.any(sizes == 0):
            raise ConfigInvalid("coordinate file clusters do not match R_true")
    sizes = np.bincount(col_labels - 1, minlength=cfg.R_true)
    kernels = _kernels(cfg, sizes, synthetic)
    dist = pairwise_distances(coords)
    kmats = []
    for r in range(cfg.R_true):
        members = np.flatnonzero(col_labels == r + 1)
        kmats.append(kernel_from_distances(kernels[r].kind, dist[np.ix_(members, members)], kernels[r]))
    return coords, col_labels, kernels, kmats, dist, synthetic


def _delta(kmat, snr, c):
    tau, xi = snr_to_tau_xi(snr, c)
    return tau * kmat + xi * np.eye(kmat.shape[0])


def _block_experiment(cfg, rng, coords, col_labels, kmats):
    """S1-type data: row clusters share one covariance across all column clusters."""
    snr = np.asarray(cfg.snr_matrix, dtype=float)
    n, p = sum(cfg.row_sizes), len(col_labels)
    row_labels = np.repeat(np.arange(1, cfg.K_true + 1), cfg.row_sizes)
    X = np.zeros((n, p))
    sigmas = []
    first = None
    for k in range(cfg.K_true):
        S = _row_covariance(k, cfg.row_sizes[k], rng, cfg.wishart_specs, first)
        if k == 0:
            first = S
        sigmas.append(S)
    for k in range(cfg.K_true):
        rows = np.flatnonzero(row_labels == k + 1)
        A = _cholesky(sigmas[k], "row covariance")
        for r in range(cfg.R_true):
            cols = np.flatnonzero(col_labels == r + 1)
            B = _cholesky(_delta(kmats[r], snr[k, r], cfg.c_true), "column covariance")
            X[np.ix_(rows, cols)] = _matrix_normal_factors(np.zeros((rows.size, cols.size)), A, B, rng)
    return X, row_labels, [np.diag(S).copy() for S in sigmas]


def s5_nested_labels(unit):
    """Built-in nested layout: six row chunks of ``unit`` rows, 1-based labels per column cluster.

    Column clusters 1 and 2 split the rows 2:2:2 (with different groupings)
    and column cluster 3 splits them 1:2:3, so every chunk has its own
    combination of labels.
    """
    chunks = np.repeat(np.arange(6), unit)
    layout = [
        [1, 1, 2, 2, 3, 3],
        [1, 1, 2, 3, 2, 3],
        [1, 2, 2, 3, 3, 3],
    ]
    return np.column_stack([np.asarray(layout[r])[chunks] for r in range(3)])


def alternative_labels(nested):
    """1-based labels of the distinct rows of ``nested`` in order of first appearance."""
    nested = np.asarray(nested)
    _, first, inverse = np.unique(nested, axis=0, return_index=True, return_inverse=True)
    inverse = np.asarray(inverse).ravel()
    rank = np.empty(first.size, dtype=int)
    rank[np.argsort(first)] = np.arange(first.size)
    return rank[inverse] + 1


def _nested_experiment(cfg, rng, col_labels, kmats):
    snr = np.asarray(cfg.snr_matrix, dtype=float)
    nested = (
        np.asarray(cfg.nested_row_labels, dtype=int).T
        if cfg.nested_row_labels is not None
        else s5_nested_labels(cfg.s5_unit)
    )
    n, p = nested.shape[0], len(col_labels)
    X = np.zeros((n, p))
    diags = []
    for r in range(cfg.R_true):
        cols = np.flatnonzero(col_labels == r + 1)
        first = None
        for k in range(cfg.K_true):
            rows = np.flatnonzero(nested[:, r] == k + 1)
            if rows.size == 0:
                continue
            S = _row_covariance(k, rows.size, rng, cfg.wishart_specs, first)
            if k == 0:
                first = S
            diags.append(np.diag(S).copy())
            A = _cholesky(S, "row covariance")
            B = _cholesky(_delta(kmats[r], snr[k, r], cfg.c_true), "column covariance")
            X[np.ix_(rows, cols)] = _matrix_normal_factors(np.zeros((rows.size, cols.size)), A, B, rng)
    return X, nested, diags


def generate_experiment(cfg: ScenarioConfig):
    """Generate ``(ExpressionDataset, GroundTruth)``; fully determined by ``cfg.seed``."""
    cfg.validate()
    rng = np.random.default_rng(cfg.seed)
    coords, col_labels, kernels, kmats, dist, synthetic = _column_setup(cfg, rng)
    snr = np.asarray(cfg.snr_matrix, dtype=float)
    tau = cfg.c_true * snr / (1.0 + snr)
    truth = GroundTruth(
        row_labels=None,
        col_labels=col_labels,
        tau=tau,
        xi=cfg.c_true - tau,
        kernels=[(k.kind.value, list(k.values)) for k in kernels],
        config=cfg.to_dict(),
    )
    if cfg.scenario is Scenario.S5:
        X, nested, diags = _nested_experiment(cfg, rng, col_labels, kmats)
        truth.nested_row_labels = nested
        truth.alt_row_labels = alternative_labels(nested)
        truth.sigma_diag = diags
    else:
        X, row_labels, diags = _block_experiment(cfg, rng, coords, col_labels, kmats)
        truth.row_labels = row_labels
        truth.sigma_diag = diags
        if cfg.scenario is Scenario.S4:
            n, p = X.shape
            Sb = sample_wishart(n, cfg.s4_wishart_scale * np.eye(n), rng)
            sigma_b = cfg.s4_sigma_b
            if synthetic:
                sigma_b *= np.sqrt(np.mean(cfg.col_sizes) / REFERENCE_CLUSTER_SIZE)
            Kb = kernel_from_distances(KernelKind.GAUSSIAN, dist, [sigma_b])
            Db = 0.5 * cfg.c_true * Kb + 0.5 * cfg.c_true * np.eye(p)
            Xb = sample_matrix_normal(np.zeros((n, p)), Sb, Db, rng)
            X = cfg.s4_lambda_s * X + cfg.s4_lambda_b * Xb
    n, p = X.shape
    ds = ExpressionDataset.from_arrays(
        X,
        coords,
        row_ids=[f"gene{i + 1}" for i in range(n)],
        col_ids=[f"spot{j + 1}" for j in range(p)],
    )
    return ds, truth
