"""Clustering error rate between two partitions."""

from __future__ import annotations

import numpy as np

from .exceptions import LengthMismatch, TooShort


def _check(a, b):
    a, b = np.asarray(a).ravel(), np.asarray(b).ravel()
    if a.size != b.size:
        raise LengthMismatch(f"label vectors have lengths {a.size} and {b.size}")
    if a.size < 2:
        raise TooShort("at least two items are needed to form a pair")
    return a, b


def cer(a, b) -> float:
    """Fraction of item pairs on whose co-membership the two partitions disagree.

    Computed from the contingency table in O(n + #labels^2); zero exactly
    when the partitions coincide up to relabelling.
    """
    a, b = _check(a, b)
    _, ia = np.unique(a, return_inverse=True)
    _, ib = np.unique(b, return_inverse=True)
    table = np.zeros((ia.max() + 1, ib.max() + 1), dtype=np.int64)
    np.add.at(table, (ia, ib), 1)

    def pairs(x):
        x = np.asarray(x, dtype=np.int64)
        return int((x * (x - 1) // 2).sum())

    n = a.size
    same_a, same_b, same_both = pairs(table.sum(axis=1)), pairs(table.sum(axis=0)), pairs(table)
    return (same_a + same_b - 2 * same_both) / (n * (n - 1) // 2)


def cer_pairwise(a, b) -> float:
    """Direct O(n^2) evaluation of :func:`cer` over all pairs."""
    a, b = _check(a, b)
    iu = np.triu_indices(a.size, 1)
    co_a = (a[:, None] == a[None, :])[iu]
    co_b = (b[:, None] == b[None, :])[iu]
    return float(np.count_nonzero(co_a != co_b)) / co_a.size
