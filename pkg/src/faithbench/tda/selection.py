"""Resolution selection by bootstrap stability, and the BND candidate score."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .._seeds import derive_seed
from ..errors import SpecError
from ..metrics import BND, MetricScore
from .bottleneck import bottleneck
from .mapper import MapperConfig, build_mapper
from .persistence import PersistenceDiagram, persistence

RESOLUTION_GRID = tuple(range(6, 31, 2))
COLUMN = "column"
TABLE = "table"


@dataclass(frozen=True)
class StabilityRecord:
    resolution: int
    candidate: str
    stability: float


def prepare_cloud(values, scaling: str = COLUMN) -> np.ndarray:
    """Put attribution tables on a common footing before distances are taken.

    ``column`` z-scores every column; ``table`` divides the centered table by
    its overall standard deviation, preserving relative feature magnitudes.
    Zero-variance columns (or tables) are only centered.
    """
    v = np.asarray(values, dtype=np.float64)
    v = v - v.mean(axis=0)
    if scaling == COLUMN:
        sd = v.std(axis=0)
        return v / np.where(sd > 0, sd, 1.0)
    if scaling == TABLE:
        sd = v.std()
        return v / sd if sd > 0 else v
    raise SpecError(f"unknown cloud scaling {scaling!r}")


def diagram(points, lens, resolution: int, gain: float = 0.4, bins: int = 10
            ) -> PersistenceDiagram:
    return persistence(build_mapper(points, lens, MapperConfig(resolution, gain, bins)))


def stability(cloud, lens, resolution: int, bootstraps: int = 30, seed: int = 0,
              gain: float = 0.4, bins: int = 10, quantile: float = 95.0) -> float:
    """95th percentile of resample-to-full bottleneck distances."""
    cloud = np.asarray(cloud)
    lens = np.asarray(lens)
    full = diagram(cloud, lens, resolution, gain, bins)
    n = cloud.shape[0]
    dists = []
    for b in range(bootstraps):
        idx = np.random.default_rng(derive_seed(seed, "bootstrap", b)).integers(0, n, n)
        dists.append(bottleneck(diagram(cloud[idx], lens[idx], resolution, gain, bins), full))
    return float(np.percentile(dists, quantile))


def select_resolution(candidates: Sequence, lens, grid: Sequence[int] = RESOLUTION_GRID,
                      bootstraps: int = 30, seed: int = 0, gain: float = 0.4, bins: int = 10,
                      names: Optional[Sequence[str]] = None) -> tuple:
    """Resolution minimising total stability over all candidate clouds (lowest wins ties).

    Returns (resolution, list of StabilityRecord).
    """
    if not len(candidates):
        raise SpecError("no candidates to select a resolution for")
    names = list(names) if names is not None else [str(i) for i in range(len(candidates))]
    records = []
    totals = []
    for r in grid:
        total = 0.0
        for name, cloud in zip(names, candidates):
            s = stability(cloud, lens, r, bootstraps, seed, gain, bins)
            records.append(StabilityRecord(int(r), name, s))
            total += s
        totals.append(total)
    best = int(np.argmin(totals))
    return int(grid[best]), records


def distance_matrix(diagrams: Sequence[PersistenceDiagram]) -> np.ndarray:
    n = len(diagrams)
    D = np.zeros((n, n))
    for i in range(n):
        for j in range(i + 1, n):
            D[i, j] = D[j, i] = bottleneck(diagrams[i], diagrams[j])
    return D


def bnd_from_matrix(D: np.ndarray) -> np.ndarray:
    """Mean distance of each candidate to all the others."""
    n = D.shape[0]
    if n < 2:
        raise SpecError("BND needs at least two candidates")
    return D.sum(axis=1) / (n - 1)


def bnd_scores(tables: Sequence, lens, resolution: int, gain: float = 0.4, bins: int = 10,
               scaling: str = COLUMN) -> tuple:
    """BND MetricScore per table plus the pairwise distance matrix and diagrams."""
    if len(tables) < 2:
        raise SpecError("BND needs at least two tables")
    diagrams = [diagram(prepare_cloud(t.values, scaling), lens, resolution, gain, bins)
                for t in tables]
    D = distance_matrix(diagrams)
    scores = [MetricScore.for_table(BND, v, t, fingerprint=f"r{resolution}")
              for v, t in zip(bnd_from_matrix(D), tables)]
    return scores, D, diagrams
