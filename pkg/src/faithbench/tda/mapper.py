"""Mapper graphs over explanation point clouds, with the model prediction as lens."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components
from scipy.spatial.distance import pdist, squareform

from ..errors import SpecError


@dataclass(frozen=True)
class MapperConfig:
    resolution: int = 10
    gain: float = 0.4
    bins: int = 10
    seed: int = 0

    def __post_init__(self):
        if self.resolution < 2:
            raise SpecError("resolution must be >= 2")
        if not 0.3 <= self.gain <= 0.5:
            raise SpecError(f"gain {self.gain} outside [0.3, 0.5]")
        if self.bins < 2:
            raise SpecError("histogram needs at least 2 bins")


@dataclass(frozen=True, eq=False)
class MapperGraph:
    nodes: tuple  # member point indices per node
    values: np.ndarray  # node filter value = mean lens of distinct members
    edges: tuple  # (i, j) with i < j

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    def to_json(self) -> dict:
        return {
            "nodes": [{"id": i, "members": [int(m) for m in mem], "value": float(v)}
                      for i, (mem, v) in enumerate(zip(self.nodes, self.values))],
            "edges": [[int(a), int(b)] for a, b in self.edges],
        }


def build_cover(lens_values, resolution: int, gain: float) -> list:
    """Overlapping intervals: r centers spaced range/r apart, each of length spacing/(1-gain)."""
    lens = np.asarray(lens_values, dtype=np.float64)
    if lens.size < 1:
        raise SpecError("lens is empty")
    if resolution < 1:
        raise SpecError("resolution must be >= 1")
    if not 0.0 <= gain < 1.0:
        raise SpecError("gain must lie in [0, 1)")
    lo, hi = float(lens.min()), float(lens.max())
    if hi == lo:
        return [(lo, hi)]
    spacing = (hi - lo) / resolution
    length = spacing / (1.0 - gain)
    out = []
    for i in range(resolution):
        c = lo + spacing * (i + 0.5)
        out.append((c - length / 2.0, c + length / 2.0))
    return out


def histogram_gap_clusters(points: np.ndarray, bins: int = 10) -> np.ndarray:
    """Single-linkage clusters cut at the first empty bin of the pairwise-distance histogram.

    No empty bin means one cluster. Zero distances (coincident points) are left
    out of the histogram; such points always share a cluster.
    """
    n = points.shape[0]
    if n <= 1:
        return np.zeros(n, dtype=np.int64)
    dist = pdist(points)
    positive = dist[dist > 0]
    if positive.size == 0:
        return np.zeros(n, dtype=np.int64)
    lo, hi = positive.min(), positive.max()
    if hi == lo:
        return np.zeros(n, dtype=np.int64)
    counts, edges = np.histogram(positive, bins=bins, range=(lo, hi))
    empty = np.flatnonzero(counts == 0)
    if empty.size == 0:
        return np.zeros(n, dtype=np.int64)
    threshold = edges[empty[0]]
    adj = squareform(dist) < threshold
    _, labels = connected_components(adj, directed=False)
    # relabel by first member so node order is deterministic
    _, first = np.unique(labels, return_index=True)
    remap = np.empty(labels.max() + 1, dtype=np.int64)
    remap[labels[np.sort(first)]] = np.arange(first.size)
    return remap[labels]


def build_mapper(points, lens, cfg: MapperConfig) -> MapperGraph:
    """Cover the lens, cluster each slice, connect clusters that share points.

    Exact duplicate rows (same coordinates and lens) are collapsed before
    clustering, so resampling with replacement does not reshape the graph.
    """
    points = np.atleast_2d(np.asarray(points, dtype=np.float64))
    lens = np.asarray(lens, dtype=np.float64).reshape(-1)
    if points.shape[0] < 1 or points.shape[0] != lens.size:
        raise SpecError("points and lens must be non-empty and equally long")
    key = np.column_stack([points, lens])
    uniq, inverse = np.unique(key, axis=0, return_inverse=True)
    inverse = inverse.reshape(-1)
    upts, ulens = uniq[:, :-1], uniq[:, -1]
    members_of = [[] for _ in range(uniq.shape[0])]
    for i, u in enumerate(inverse):
        members_of[u].append(i)

    node_uniq = []
    for lo, hi in build_cover(ulens, cfg.resolution, cfg.gain):
        inside = np.flatnonzero((ulens >= lo) & (ulens <= hi))
        if inside.size == 0:
            continue
        labels = histogram_gap_clusters(upts[inside], cfg.bins)
        for c in range(labels.max() + 1):
            node_uniq.append(inside[labels == c])

    nodes = tuple(np.array(sorted(m for u in nu for m in members_of[u]), dtype=np.int64)
                  for nu in node_uniq)
    values = np.array([ulens[nu].mean() for nu in node_uniq])
    # edges: nodes sharing at least one (distinct) point
    rows, cols = [], []
    for node_id, nu in enumerate(node_uniq):
        rows.extend(nu.tolist())
        cols.extend([node_id] * nu.size)
    inc = coo_matrix((np.ones(len(rows)), (rows, cols)),
                     shape=(uniq.shape[0], len(node_uniq))).tocsc()
    shared = (inc.T @ inc).tocoo()
    edges = sorted({(int(a), int(b)) for a, b in zip(shared.row, shared.col) if a < b})
    return MapperGraph(nodes, values, tuple(edges))
