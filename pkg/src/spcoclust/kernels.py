"""Isotropic spatial covariance kernels and their eigendecompositions.

Three families are supported, all equal to 1 at distance zero:

* exponential, ``exp(-d / theta)``
* rational quadratic, ``(1 + d**2 / (2 * alpha * theta**2)) ** -alpha``
* gaussian, ``exp(-d**2 / (2 * theta**2))``
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .exceptions import NonPositiveParameter, NotPositiveSemidefinite

#: eigenvalues in [-CLAMP_TOL, 0) are treated as round-off and set to zero
CLAMP_TOL = 1e-10


class KernelKind(str, enum.Enum):
    EXPONENTIAL = "exponential"
    RATIONAL_QUADRATIC = "rational_quadratic"
    GAUSSIAN = "gaussian"

    @property
    def n_params(self) -> int:
        return 2 if self is KernelKind.RATIONAL_QUADRATIC else 1

    @classmethod
    def parse(cls, value) -> "KernelKind":
        if isinstance(value, cls):
            return value
        key = str(value).strip().lower().replace("-", "_").replace(" ", "_")
        aliases = {
            "exp": cls.EXPONENTIAL,
            "exponential": cls.EXPONENTIAL,
            "rq": cls.RATIONAL_QUADRATIC,
            "rationalquadratic": cls.RATIONAL_QUADRATIC,
            "rational_quadratic": cls.RATIONAL_QUADRATIC,
            "gaussian": cls.GAUSSIAN,
            "squared_exponential": cls.GAUSSIAN,
            "se": cls.GAUSSIAN,
        }
        try:
            return aliases[key]
        except KeyError:
            raise ValueError(f"unknown kernel kind {value!r}") from None


@dataclass(frozen=True)
class KernelParams:
    """Kernel family plus its parameter vector.

    Exponential and gaussian take ``(theta,)``; rational quadratic takes
    ``(theta, alpha)``.
    """

    kind: KernelKind
    values: tuple

    def __post_init__(self):
        kind = KernelKind.parse(self.kind)
        values = tuple(float(v) for v in np.atleast_1d(self.values))
        object.__setattr__(self, "kind", kind)
        object.__setattr__(self, "values", values)
        if len(values) != kind.n_params:
            raise ValueError(f"{kind.value} kernel takes {kind.n_params} parameter(s), got {len(values)}")
        if not all(np.isfinite(v) and v > 0 for v in values):
            raise NonPositiveParameter(f"kernel parameters must be positive, got {values}")


def _as_params(kind, params) -> KernelParams:
    if isinstance(params, KernelParams):
        if params.kind is not KernelKind.parse(kind):
            raise ValueError(f"parameters are for {params.kind.value}, not {kind}")
        return params
    return KernelParams(kind, params)


def kernel_value(kind, d, params):
    """Evaluate the kernel at distance(s) ``d`` (scalar or array)."""
    p = _as_params(kind, params)
    d = np.asarray(d, dtype=float)
    if np.any(d < 0):
        raise ValueError("distances must be non-negative")
    theta = p.values[0]
    if p.kind is KernelKind.EXPONENTIAL:
        out = np.exp(-d / theta)
    elif p.kind is KernelKind.GAUSSIAN:
        out = np.exp(-(d**2) / (2.0 * theta**2))
    else:
        a = p.values[1]
        out = np.exp(-a * np.log1p(d**2 / (2.0 * a * theta**2)))
    return float(out) if out.ndim == 0 else out


def kernel_from_distances(kind, dist, params) -> np.ndarray:
    """Kernel matrix from a precomputed distance matrix."""
    K = kernel_value(kind, np.asarray(dist, dtype=float), params)
    K = np.atleast_2d(K)
    np.fill_diagonal(K, 1.0)
    return K


def pairwise_distances(coords) -> np.ndarray:
    coords = np.atleast_2d(np.asarray(coords, dtype=float))
    diff = coords[:, None, :] - coords[None, :, :]
    return np.sqrt((diff**2).sum(axis=-1))


def kernel_matrix(kind, coords, params) -> np.ndarray:
    """Symmetric kernel matrix over the given 2-D points."""
    coords = np.atleast_2d(np.asarray(coords, dtype=float))
    if coords.shape[0] < 1:
        raise ValueError("at least one point is required")
    return kernel_from_distances(kind, pairwise_distances(coords), params)


@dataclass(frozen=True, eq=False)
class KernelEigenCache:
    """Eigendecomposition ``K = U diag(lam) U^T`` of one column cluster's kernel.

    ``columns`` records which dataset columns the kernel was built on so
    that consumers can detect a cache that no longer matches the labels.
    """

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    phi_used: KernelParams | None = None
    col_cluster: int | None = None
    columns: tuple | None = None

    @property
    def size(self) -> int:
        return self.eigenvalues.shape[0]

    @property
    def ones_projection(self) -> np.ndarray:
        """``U^T 1``, reused by every mean-shifted quadratic form."""
        return self.eigenvectors.sum(axis=0)

    def reconstruct(self) -> np.ndarray:
        U, lam = self.eigenvectors, self.eigenvalues
        return (U * lam) @ U.T


def kernel_eigen(K, phi_used=None, col_cluster=None, columns=None) -> KernelEigenCache:
    """Symmetric eigendecomposition with round-off clamping.

    Eigenvalues are returned in descending order. Values in
    ``[-1e-10, 0)`` are clamped to zero; anything more negative raises
    :class:`NotPositiveSemidefinite`.
    """
    K = np.asarray(K, dtype=float)
    if K.ndim != 2 or K.shape[0] != K.shape[1]:
        raise ValueError("kernel matrix must be square")
    lam, U = np.linalg.eigh(0.5 * (K + K.T))
    lam, U = lam[::-1].copy(), U[:, ::-1].copy()
    if lam.size and lam[-1] < -CLAMP_TOL:
        raise NotPositiveSemidefinite(f"smallest eigenvalue {lam[-1]:.3e} is below -{CLAMP_TOL}")
    np.clip(lam, 0.0, None, out=lam)
    lam.setflags(write=False)
    U.setflags(write=False)
    if columns is not None:
        columns = tuple(int(c) for c in columns)
    return KernelEigenCache(lam, U, phi_used, col_cluster, columns)
