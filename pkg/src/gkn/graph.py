"""Spatial graphs over discretised fields: radius balls, Nystrom subgraphs, partitions."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.spatial import cKDTree

from . import autodiff as ad
from .random_fields import grid_coords


@dataclass(frozen=True)
class SpatialGraph:
    """Directed radius graph; edge ``e`` carries a message from ``sources[e]`` to ``targets[e]``.

    ``edge_features[e] = (coords[target], coords[source], a[target], a[source])``.
    """

    node_coords: np.ndarray
    node_index_map: np.ndarray
    sources: np.ndarray
    targets: np.ndarray
    edge_features: np.ndarray
    node_inputs: np.ndarray
    node_targets: np.ndarray | None = None
    radius: float = 0.0
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    @property
    def num_nodes(self) -> int:
        return self.node_coords.shape[0]

    @property
    def num_edges(self) -> int:
        return self.sources.size

    def aggregator(self) -> sp.csr_matrix:
        if "agg" not in self._cache:
            self._cache["agg"] = ad.mean_aggregator(self.targets, self.num_nodes)
        return self._cache["agg"]

    def scatter(self) -> sp.csr_matrix:
        if "scatter" not in self._cache:
            self._cache["scatter"] = ad.incidence(self.sources, self.num_nodes)
        return self._cache["scatter"]

    def degrees(self) -> np.ndarray:
        return np.bincount(self.targets, minlength=self.num_nodes)


@dataclass(frozen=True)
class SamplingPlan:
    """Node sampling for training (m, l, r) and testing (m_test, l_test, r_test)."""

    m: int = 200
    l: int = 2
    m_test: int = 200
    l_test: int = 1
    r: float = 0.25
    r_test: float = 0.25
    seed: int = 0

    def __post_init__(self):
        if self.m < 2 or self.m_test < 2:
            raise ValueError("subgraphs need at least 2 nodes")
        if self.l < 1 or self.l_test < 1:
            raise ValueError("l must be >= 1")
        if self.r <= 0 or self.r_test <= 0:
            raise ValueError("radius must be positive")


def radius_pairs(coords: np.ndarray, r: float) -> tuple[np.ndarray, np.ndarray]:
    """All ordered pairs (target, source) with 0 < |x - y| <= r, sorted by (target, source)."""
    tree = cKDTree(coords)
    pairs = tree.query_pairs(r, output_type="ndarray")
    if pairs.size == 0:
        empty = np.zeros(0, dtype=np.int64)
        return empty, empty
    tgt = np.concatenate([pairs[:, 0], pairs[:, 1]]).astype(np.int64)
    src = np.concatenate([pairs[:, 1], pairs[:, 0]]).astype(np.int64)
    order = np.lexsort((src, tgt))
    return tgt[order], src[order]


def build_radius_graph(coords: np.ndarray, a_values: np.ndarray, node_inputs: np.ndarray,
                       r: float, node_targets: np.ndarray | None = None,
                       node_index_map: np.ndarray | None = None) -> SpatialGraph:
    coords = np.asarray(coords, dtype=np.float64)
    if r <= 0:
        raise ValueError("radius must be positive")
    if coords.shape[0] < 2:
        raise ValueError("need at least two nodes")
    a_values = np.asarray(a_values, dtype=np.float64).reshape(-1)
    tgt, src = radius_pairs(coords, r)
    feats = np.concatenate([coords[tgt], coords[src], a_values[tgt, None], a_values[src, None]],
                           axis=1)
    if node_index_map is None:
        node_index_map = np.arange(coords.shape[0])
    return SpatialGraph(
        node_coords=coords,
        node_index_map=np.asarray(node_index_map, dtype=np.int64),
        sources=src,
        targets=tgt,
        edge_features=feats,
        node_inputs=np.asarray(node_inputs, dtype=np.float64),
        node_targets=None if node_targets is None else np.asarray(node_targets, dtype=np.float64),
        radius=r,
    )


@dataclass(frozen=True)
class GridSample:
    """One discretised pair on the full grid: coordinates, edge-side a, node inputs, targets."""

    coords: np.ndarray
    a_values: np.ndarray
    node_inputs: np.ndarray
    targets: np.ndarray | None = None

    @property
    def num_nodes(self) -> int:
        return self.coords.shape[0]

    def subgraph(self, nodes: np.ndarray, r: float) -> SpatialGraph:
        nodes = np.asarray(nodes, dtype=np.int64)
        return build_radius_graph(
            self.coords[nodes], self.a_values[nodes], self.node_inputs[nodes], r,
            None if self.targets is None else self.targets[nodes], node_index_map=nodes)

    def full_graph(self, r: float) -> SpatialGraph:
        return self.subgraph(np.arange(self.num_nodes), r)


def nystrom_subsample(sample: GridSample, m: int, l: int, r: float,
                      rng: np.random.Generator) -> list[SpatialGraph]:
    """``l`` independent subgraphs of ``m`` nodes drawn uniformly without replacement."""
    K = sample.num_nodes
    if m > K:
        raise ValueError(f"cannot sample m={m} nodes from K={K}")
    graphs = []
    for _ in range(l):
        nodes = np.sort(rng.choice(K, size=m, replace=False))
        graphs.append(sample.subgraph(nodes, r))
    return graphs


def partition_for_evaluation(sample: GridSample, m: int, r: float,
                             rng: np.random.Generator) -> list[SpatialGraph]:
    """Random permutation of all nodes cut into ceil(K/m) blocks, one radius graph each."""
    K = sample.num_nodes
    if m > K:
        raise ValueError(f"block size m={m} exceeds K={K}")
    perm = rng.permutation(K)
    blocks = [np.sort(perm[i:i + m]) for i in range(0, K, m)]
    return [sample.subgraph(b, r) for b in blocks]


def mean_interior_degree(s: int, r: float, margin: float | None = None) -> float:
    """Mean |N(x)| over grid nodes at distance > ``margin`` (default r) from the boundary."""
    coords = grid_coords(s, 2)
    tgt, _ = radius_pairs(coords, r)
    deg = np.bincount(tgt, minlength=coords.shape[0])
    margin = r if margin is None else margin
    inside = np.all((coords > margin) & (coords < 1 - margin), axis=1)
    return float(deg[inside].mean())
