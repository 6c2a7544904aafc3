"""Spatially-aware co-clustering of expression matrices."""

from ._version import __version__
from .core import BlockGrid, BlockParameters, CoClusterLabels, ExpressionDataset, FitResult, ModelSpec
from .estimation import FitConfig, fit
from .evaluate import cer
from .kernels import KernelKind, KernelParams
from .selection import icl, select


__all__ = [
    "BlockGrid",
    "BlockParameters",
    "CoClusterLabels",
    "ExpressionDataset",
    "FitConfig",
    "FitResult",
    "KernelKind",
    "KernelParams",
    "ModelSpec",
    "cer",
    "fit",
    "icl",
    "select",
]
