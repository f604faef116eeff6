"""Bottleneck-distance metric: mapper graphs, extended persistence, bottleneck matching."""
from .bottleneck import bottleneck, diagonal_distance
from .mapper import MapperConfig, MapperGraph, build_cover, build_mapper, histogram_gap_clusters
from .persistence import BRANCH, COMPONENT, LOOP, PersistenceDiagram, graph_persistence, persistence
from .selection import (RESOLUTION_GRID, StabilityRecord, bnd_from_matrix, bnd_scores, diagram,
                        distance_matrix, prepare_cloud, select_resolution, stability)

__all__ = [
    "bottleneck", "diagonal_distance", "MapperConfig", "MapperGraph", "build_cover",
    "build_mapper", "histogram_gap_clusters", "BRANCH", "COMPONENT", "LOOP",
    "PersistenceDiagram", "graph_persistence", "persistence", "RESOLUTION_GRID",
    "StabilityRecord", "bnd_from_matrix", "bnd_scores", "diagram", "distance_matrix",
    "prepare_cloud", "select_resolution", "stability",
]
