"""Connected clusters: full torus decomposition and single-cluster exploration.

decompose_torus reveals every torus bond and partitions the whole
configuration; explore_cluster grows one cluster from an origin, revealing
bond statuses lazily, and works on the torus and on Z^d alike. Both consume
the same per-bond uniforms, so the origin's cluster agrees between them
replicate by replicate.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

from .errors import InvalidSpec
from .lattice import Bond, TorusSpec, Vertex
from . import lattice as lat
from . import randomness as rnd


class UnionFind:
    """Disjoint sets over 0..n-1 with path compression and union by size."""

    def __init__(self, n: int):
        self.parent = list(range(n))
        self.size = [1] * n

    def find(self, x: int) -> int:
        parent = self.parent
        root = x
        while parent[root] != root:
            root = parent[root]
        while parent[x] != root:
            parent[x], x = root, parent[x]
        return root

    def union(self, a: int, b: int) -> None:
        ra, rb = self.find(a), self.find(b)
        if ra == rb:
            return
        if self.size[ra] < self.size[rb]:
            ra, rb = rb, ra
        self.parent[rb] = ra
        self.size[ra] += self.size[rb]

    def component_sizes(self) -> list[int]:
        return [self.size[i] for i in range(len(self.parent)) if self.find(i) == i]


@dataclass
class ClusterStats:
    """Whole-configuration cluster statistics of one torus replicate."""

    sizes: list[int]
    max_size: int
    sum_sq_over_V: float

    @classmethod
    def from_sizes(cls, sizes, volume: int) -> "ClusterStats":
        sizes = sorted(int(s) for s in sizes)
        ssq = sum(s * s for s in sizes)
        return cls(sizes=sizes, max_size=sizes[-1], sum_sq_over_V=ssq / volume)


@dataclass
class ExplorationResult:
    """Outcome of one single-cluster exploration."""

    cluster: set[Vertex]
    censored: bool
    revealed_bonds: int


@dataclass(frozen=True)
class Torus:
    spec: TorusSpec


@dataclass(frozen=True)
class Lattice:
    spec: TorusSpec


@lru_cache(maxsize=8)
def torus_bond_arrays(spec: TorusSpec):
    """Per-spec dense arrays for vectorized full-torus reveals.

    Returns (i0, i1, folds): endpoint indices into the lexicographic vertex
    enumeration and the 64-bit hash fold of each canonical bond key, in
    torus_bonds order.
    """
    verts = np.array(lat.domain_vertices(spec), dtype=np.int64).reshape(spec.volume, spec.d)
    lo, r = spec.lo, spec.r
    strides = np.array([r ** (spec.d - 1 - k) for k in range(spec.d)], dtype=np.int64)
    blocks0, blocks1, coord_blocks = [], [], []
    idx = ((verts - lo) * strides).sum(axis=1)
    for off in lat.positive_offsets(spec):
        other = verts + np.array(off, dtype=np.int64)
        other_idx = (((other - lo) % r) * strides).sum(axis=1)
        blocks0.append(idx)
        blocks1.append(other_idx)
        coord_blocks.append(np.hstack([verts, other]))
    i0 = np.concatenate(blocks0).astype(np.int32)
    i1 = np.concatenate(blocks1).astype(np.int32)
    folds = rnd.bond_folds_np(np.vstack(coord_blocks))
    return i0, i1, folds


def torus_occupancy(spec: TorusSpec, p: float, stream: rnd.RandomStream) -> np.ndarray:
    """Occupied mask over the canonical torus bonds (torus_bonds order)."""
    _, _, folds = torus_bond_arrays(spec)
    return rnd.uniforms_np(np.uint64(stream.key), folds) < p


def decompose_labels(spec: TorusSpec, p: float, stream: rnd.RandomStream) -> np.ndarray:
    """Cluster label of every domain vertex, via C connected components."""
    i0, i1, _ = torus_bond_arrays(spec)
    occ = torus_occupancy(spec, p, stream)
    a, b = i0[occ], i1[occ]
    graph = coo_matrix(
        (np.ones(a.size, dtype=np.int8), (a, b)), shape=(spec.volume, spec.volume)
    )
    _, labels = connected_components(graph, directed=False)
    return labels


def decompose_torus(
    spec: TorusSpec, p: float, stream: rnd.RandomStream, engine: str = "unionfind"
) -> ClusterStats:
    """Reveal all V*degree/2 torus bonds and return the exact cluster partition.

    The average of sum_sq_over_V over replicates estimates the torus
    susceptibility without bias. Both engines consume identical bond
    uniforms and return identical statistics.
    """
    if not 0.0 <= p <= 1.0:
        raise InvalidSpec(f"p must be in [0,1], got {p}")
    if engine == "csgraph":
        labels = decompose_labels(spec, p, stream)
        return ClusterStats.from_sizes(np.bincount(labels), spec.volume)
    if engine != "unionfind":
        raise ValueError(f"unknown engine {engine!r}")
    i0, i1, _ = torus_bond_arrays(spec)
    occ = torus_occupancy(spec, p, stream)
    uf = UnionFind(spec.volume)
    for a, b in zip(i0[occ].tolist(), i1[occ].tolist()):
        uf.union(a, b)
    return ClusterStats.from_sizes(uf.component_sizes(), spec.volume)


def explore_cluster(
    graph: Torus | Lattice,
    origin: Vertex,
    p: float,
    stream: rnd.RandomStream,
    cap: int,
    order: str = "fifo",
    target: Vertex | None = None,
) -> ExplorationResult:
    """Grow the origin's cluster by revealing bonds incident to active vertices.

    Each bond's status is queried exactly once per exploration. Stops when no
    active vertices remain or the cluster has reached cap vertices (censored).
    On the torus, bonds are keyed by their canonical class representative, so
    the statuses agree with decompose_torus replicate by replicate; on Z^d
    every bond has its own key. With target set, stops as soon as the target
    joins the cluster (the cluster set is then partial; only membership of
    the target is meaningful).
    """
    spec = graph.spec
    if cap < 1:
        raise InvalidSpec(f"cap must be >= 1, got {cap}")
    if not 0.0 <= p <= 1.0:
        raise InvalidSpec(f"p must be in [0,1], got {p}")
    if order not in ("fifo", "lifo"):
        raise ValueError(f"unknown order {order!r}")
    on_torus = isinstance(graph, Torus)
    lo, r = spec.lo, spec.r
    if on_torus:
        origin = lat.canonical_class(origin, spec)
        if target is not None:
            target = lat.canonical_class(target, spec)

    offsets = lat.neighbor_offsets(spec)
    key = stream.key
    fold = rnd.bond_fold
    mix = rnd.mix64
    inv53 = 2.0**-53

    cluster = {origin}
    seen: set[Bond] = set()
    queue = deque([origin])
    pop = queue.popleft if order == "fifo" else queue.pop
    revealed = 0
    if target is not None and target == origin:
        return ExplorationResult(cluster, False, 0)

    while queue:
        v = pop()
        for off in offsets:
            wz = tuple(c + o for c, o in zip(v, off))
            bond = (v, wz) if v < wz else (wz, v)
            if on_torus:
                kb = lat.bond_canonical(bond, spec)
                w = tuple((c - lo) % r + lo for c in wz)
            else:
                kb = bond
                w = wz
            if kb in seen:
                continue
            seen.add(kb)
            u = (mix(key ^ fold(kb[0] + kb[1])) >> 11) * inv53
            revealed += 1
            if u < p and w not in cluster:
                cluster.add(w)
                if target is not None and w == target:
                    return ExplorationResult(cluster, False, revealed)
                if len(cluster) >= cap:
                    # a cluster that swallowed the whole torus is complete,
                    # not truncated
                    censored = not (on_torus and len(cluster) == spec.volume)
                    return ExplorationResult(cluster, censored, revealed)
                queue.append(w)
    return ExplorationResult(cluster, False, revealed)
