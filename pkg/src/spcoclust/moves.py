"""Metropolis-Hastings proposals for the column labels.

Two moves relabel columns between clusters:

* ``M1`` draws a source and a different target cluster and moves ``m``
  random members of the source to the target.
* ``M2`` draws ``m`` independent (source, target) pairs and, for every
  source ``r``, moves ``b1[r]`` distinct random members to the targets
  paired with it.

In both moves a column is relabelled at most once, so the candidate fixes
the multiset of (source, target) pairs and the reverse move is the same
kind of draw with the pairs flipped. Summing the probability of every draw
sequence that produces the candidate gives the transition-ratio identity

    q(W | W*) / q(W* | W) = prod_r p_r! / p*_r!

where ``p_r`` and ``p*_r`` are the cluster sizes before and after the move.
For M1 this is ``p_g1! p_g2! / ((p_g1 - m)! (p_g2 + m)!)``.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln

from .exceptions import SingleColumnCluster


class MoveKind(str, enum.Enum):
    M1 = "M1"
    M2 = "M2"


@dataclass(frozen=True, eq=False)
class ProposalOutcome:
    """A candidate column labelling (0-based) and its log transition ratio.

    ``log_transition_ratio`` is ``log q(W | W*) - log q(W* | W)``; it is
    NaN for infeasible proposals, whose candidate equals the input.
    """

    candidate: np.ndarray
    log_transition_ratio: float
    move_kind: MoveKind
    feasible: bool
    affected: tuple = ()


def log_size_ratio(sizes_before, sizes_after) -> float:
    """``sum_r log(p_r! / p*_r!)`` over all clusters."""
    before = np.asarray(sizes_before, dtype=float)
    after = np.asarray(sizes_after, dtype=float)
    return float((gammaln(before + 1.0) - gammaln(after + 1.0)).sum())


def m1_log_ratio(p_g1, p_g2, m) -> float:
    """Log of ``p_g1! p_g2! / ((p_g1 - m)! (p_g2 + m)!)``."""
    return float(gammaln(p_g1 + 1) + gammaln(p_g2 + 1) - gammaln(p_g1 - m + 1) - gammaln(p_g2 + m + 1))


def _draw_pair(R, rng):
    g1 = int(rng.integers(R))
    g2 = int(rng.integers(R - 1))
    return g1, g2 + (g2 >= g1)


def _n_clusters(labels, R):
    if R is None:
        R = int(labels.max()) + 1
    if R < 2:
        raise SingleColumnCluster("column moves need R >= 2")
    return R


def propose_m1(col_labels, m, rng, R=None) -> ProposalOutcome:
    """Move ``m`` random members of a random cluster to another random cluster."""
    labels = np.asarray(col_labels)
    R = _n_clusters(labels, R)
    g1, g2 = _draw_pair(R, rng)
    members = np.flatnonzero(labels == g1)
    if members.size <= m:
        return ProposalOutcome(labels.copy(), float("nan"), MoveKind.M1, False, (g1, g2))
    moved = rng.choice(members, size=m, replace=False)
    candidate = labels.copy()
    candidate[moved] = g2
    p_g2 = int(np.count_nonzero(labels == g2))
    return ProposalOutcome(candidate, m1_log_ratio(members.size, p_g2, m), MoveKind.M1, True, (g1, g2))


def propose_m2(col_labels, m, rng, R=None) -> ProposalOutcome:
    """Relabel one column per drawn (source, target) pair, ``m`` pairs in total."""
    labels = np.asarray(col_labels)
    R = _n_clusters(labels, R)
    pairs = [_draw_pair(R, rng) for _ in range(m)]
    sizes = np.bincount(labels, minlength=R)
    b1 = np.bincount([g1 for g1, _ in pairs], minlength=R)
    b2 = np.bincount([g2 for _, g2 in pairs], minlength=R)
    after = sizes - b1 + b2
    affected = tuple(sorted({g for pair in pairs for g in pair}))
    if np.any(b1 > sizes) or np.any(after < 1):
        return ProposalOutcome(labels.copy(), float("nan"), MoveKind.M2, False, affected)
    candidate = labels.copy()
    for r in np.flatnonzero(b1):
        targets = [g2 for g1, g2 in pairs if g1 == r]
        chosen = rng.choice(np.flatnonzero(labels == r), size=len(targets), replace=False)
        candidate[chosen] = targets
    return ProposalOutcome(candidate, log_size_ratio(sizes, after), MoveKind.M2, True, affected)
