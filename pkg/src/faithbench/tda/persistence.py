"""Extended persistence of a node-filtered graph.

The graph is filtered upward (vertex value, edge value = max of endpoints),
then coned off from the top down: a cone vertex w is placed first, and cone
simplices w*v (value f(v)) and w*e (value min over e) are appended in
decreasing value. Standard Z/2 column reduction over this single filtration
yields four kinds of pairs:

* up/up       -> ordinary H0, a branch merging upward     (birth < death)
* up/down  0d -> one essential pair per connected component (min, max)
* up/down  1d -> a loop                                    (birth >= death)
* down/down   -> relative H1, a branch merging downward    (birth > death)

Columns are Python ints used as bitsets, which keeps the reduction fast at
mapper-graph sizes.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .mapper import MapperGraph

COMPONENT = "component"
BRANCH = "branch"
LOOP = "loop"
CLASSES = (COMPONENT, BRANCH, LOOP)


@dataclass(frozen=True, eq=False)
class PersistenceDiagram:
    points: np.ndarray  # (n, 2) birth, death
    classes: tuple

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=np.float64).reshape(-1, 2)
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "classes", tuple(self.classes))
        if len(self.classes) != pts.shape[0]:
            raise ValueError("one class label per point required")

    @classmethod
    def from_pairs(cls, pairs) -> "PersistenceDiagram":
        pairs = list(pairs)
        pts = np.array([(b, d) for b, d, _ in pairs], dtype=np.float64).reshape(-1, 2)
        return cls(pts, tuple(c for _, _, c in pairs))

    def __len__(self) -> int:
        return self.points.shape[0]

    def sorted_pairs(self) -> list:
        return sorted((float(b), float(d), c) for (b, d), c in zip(self.points, self.classes))

    def of_class(self, cls_name: str) -> "PersistenceDiagram":
        keep = [i for i, c in enumerate(self.classes) if c == cls_name]
        return PersistenceDiagram(self.points[keep], tuple(cls_name for _ in keep))

    def to_csv(self, path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["birth", "death", "class"])
            for b, d, c in self.sorted_pairs():
                w.writerow([repr(b), repr(d), c])
        return path


def graph_persistence(values, edges) -> PersistenceDiagram:
    """Extended persistence of a graph given per-node filter values and an edge list."""
    f = np.asarray(values, dtype=np.float64).reshape(-1)
    nv = f.size
    if nv == 0:
        return PersistenceDiagram(np.empty((0, 2)), ())
    edges = [(int(a), int(b)) for a, b in edges if int(a) != int(b)]

    # simplex records: (pass, value, dim, tiebreak, kind, payload)
    up = [(f[v], 0, v, "v", v) for v in range(nv)]
    up += [(max(f[a], f[b]), 1, i, "e", i) for i, (a, b) in enumerate(edges)]
    up.sort(key=lambda r: (r[0], r[1], r[2]))
    down = [(f[v], 1, v, "cv", v) for v in range(nv)]
    down += [(min(f[a], f[b]), 2, i, "ce", i) for i, (a, b) in enumerate(edges)]
    down.sort(key=lambda r: (-r[0], r[1], r[2]))

    order = [(-np.inf, 0, "w", None, "up")]  # cone vertex first
    order += [(r[0], r[1], r[3], r[4], "up") for r in up]
    order += [(r[0], r[1], r[3], r[4], "down") for r in down]
    pos = {}
    for idx, (_, _, kind, payload, _) in enumerate(order):
        pos[(kind, payload)] = idx

    columns = []
    for value, dim, kind, payload, _ in order:
        if kind in ("w", "v"):
            col = 0
        elif kind == "e":
            a, b = edges[payload]
            col = (1 << pos[("v", a)]) | (1 << pos[("v", b)])
        elif kind == "cv":
            col = (1 << pos[("w", None)]) | (1 << pos[("v", payload)])
        else:  # cone over an edge: boundary is the edge plus both cone edges
            a, b = edges[payload]
            col = (1 << pos[("e", payload)]) | (1 << pos[("cv", a)]) | (1 << pos[("cv", b)])
        columns.append(col)

    pivot_owner = {}
    pairs = []
    for j in range(len(columns)):
        col = columns[j]
        while col:
            low = col.bit_length() - 1
            other = pivot_owner.get(low)
            if other is None:
                break
            col ^= columns[other]
        columns[j] = col
        if col:
            low = col.bit_length() - 1
            pivot_owner[low] = j
            pairs.append((low, j))

    out = []
    for i, j in pairs:
        vi, _, ki, _, pi = order[i]
        vj, _, kj, _, pj = order[j]
        if pi == "up" and pj == "up":
            cls = BRANCH
        elif pi == "up" and pj == "down":
            cls = COMPONENT if ki == "v" else LOOP
        else:
            cls = BRANCH
        if cls != COMPONENT and vi == vj:
            continue
        out.append((float(vi), float(vj), cls))
    return PersistenceDiagram.from_pairs(sorted(out))


def persistence(graph: MapperGraph) -> PersistenceDiagram:
    return graph_persistence(graph.values, graph.edges)
