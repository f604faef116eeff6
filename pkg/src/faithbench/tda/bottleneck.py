"""Exact bottleneck distance between persistence diagrams.

Binary search over the finite set of candidate costs; each probe asks whether
the augmented bipartite graph (points of one diagram plus diagonal copies of
the other) has a perfect matching using only edges no longer than the probe.
"""
from __future__ import annotations

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import maximum_bipartite_matching

from .persistence import CLASSES, PersistenceDiagram


def _pts(d) -> np.ndarray:
    if isinstance(d, PersistenceDiagram):
        return d.points
    return np.asarray(d, dtype=np.float64).reshape(-1, 2)


def diagonal_distance(points: np.ndarray) -> np.ndarray:
    """L-infinity distance of each point to the diagonal."""
    return np.abs(points[:, 1] - points[:, 0]) / 2.0


def _feasible(cross, da, db, t) -> bool:
    n, m = cross.shape
    size = n + m
    # left: A_0..A_{n-1}, diag(B)_0..diag(B)_{m-1}; right: B_0..B_{m-1}, diag(A)_0..diag(A)_{n-1}
    adj = np.zeros((size, size), dtype=bool)
    adj[:n, :m] = cross <= t
    adj[np.arange(n), m + np.arange(n)] = da <= t
    adj[n + np.arange(m), np.arange(m)] = db <= t
    adj[n:, m:] = True
    match = maximum_bipartite_matching(csr_matrix(adj), perm_type="column")
    return bool(np.all(match >= 0))


def bottleneck(d1, d2, by_class: bool = False) -> float:
    """Bottleneck distance; with ``by_class`` the matching never crosses feature classes."""
    if by_class:
        return max((bottleneck(d1.of_class(c), d2.of_class(c)) for c in CLASSES), default=0.0)
    a, b = _pts(d1), _pts(d2)
    n, m = a.shape[0], b.shape[0]
    if n == 0 and m == 0:
        return 0.0
    da, db = diagonal_distance(a), diagonal_distance(b)
    if n == 0:
        return float(db.max())
    if m == 0:
        return float(da.max())
    cross = np.maximum(np.abs(a[:, None, 0] - b[None, :, 0]),
                       np.abs(a[:, None, 1] - b[None, :, 1]))
    candidates = np.unique(np.concatenate([cross.ravel(), da, db, [0.0]]))
    lo, hi = 0, candidates.size - 1
    # the largest candidate is always feasible
    while lo < hi:
        mid = (lo + hi) // 2
        if _feasible(cross, da, db, candidates[mid]):
            hi = mid
        else:
            lo = mid + 1
    return float(candidates[lo])
