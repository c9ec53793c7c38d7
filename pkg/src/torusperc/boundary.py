"""Boundary-condition experiments on the box.

Periodic means the torus; free confines connections to bonds inside the box;
bulk takes Z^d clusters intersected with the box, so connections may leave
and re-enter. Non-wrapping in-box bonds carry the same hash key in all three
settings, which couples the ensembles replicate by replicate: free clusters
sit inside both the periodic and the bulk ones.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass
from enum import Enum
from functools import lru_cache

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

from .errors import EmptyConditioning, InvalidSpec
from .estimators import Estimate, MomentAcc, VectorMomentAcc
from .fitting import LineFit
from .lattice import TorusSpec, Vertex, domain_vertices
from . import cluster as clu
from . import coupling as cpl
from . import critical
from . import estimators as est
from . import lattice as lat
from . import parallel
from . import randomness as rnd


class BoundaryCondition(str, Enum):
    PERIODIC = "periodic"
    FREE = "free"
    BULK = "bulk"


@lru_cache(maxsize=8)
def free_bond_arrays(spec: TorusSpec):
    """The subset of torus bonds whose second endpoint stays inside the box.

    These are exactly the non-wrapping bonds, and their canonical keys
    coincide with their Z^d keys, so free statuses agree with both the
    periodic and the bulk reveals.
    """
    i0, i1, folds = clu.torus_bond_arrays(spec)
    verts = np.array(domain_vertices(spec), dtype=np.int64)
    keep = np.zeros(i0.size, dtype=bool)
    # a bond wraps iff the canonical class of its second endpoint differs
    # from the raw second endpoint; recompute from the coordinate blocks
    lo, hi_c = spec.lo, spec.hi
    coords = []
    for off in lat.positive_offsets(spec):
        coords.append(verts + np.array(off, dtype=np.int64))
    second = np.vstack(coords)
    keep = ((second >= lo) & (second <= hi_c)).all(axis=1)
    return i0[keep], i1[keep], folds[keep]


def free_labels(spec: TorusSpec, p: float, stream: rnd.RandomStream) -> np.ndarray:
    i0, i1, folds = free_bond_arrays(spec)
    occ = rnd.uniforms_np(np.uint64(stream.key), folds) < p
    a, b = i0[occ], i1[occ]
    graph = coo_matrix((np.ones(a.size, dtype=np.int8), (a, b)),
                       shape=(spec.volume, spec.volume))
    _, labels = connected_components(graph, directed=False)
    return labels


def free_cluster(spec: TorusSpec, origin: Vertex, p: float, stream: rnd.RandomStream) -> set:
    """Free-boundary cluster of origin: exploration confined to in-box bonds."""
    if not spec.in_domain(origin):
        raise InvalidSpec(f"{origin} is outside the box")
    offsets = lat.neighbor_offsets(spec)
    key = stream.key
    fold, mix, inv53 = rnd.bond_fold, rnd.mix64, 2.0**-53
    cluster = {origin}
    queue = deque([origin])
    seen = set()
    while queue:
        v = queue.popleft()
        for off in offsets:
            w = tuple(c + o for c, o in zip(v, off))
            if not spec.in_domain(w):
                continue
            bond = (v, w) if v < w else (w, v)
            if bond in seen:
                continue
            seen.add(bond)
            if (mix(key ^ fold(bond[0] + bond[1])) >> 11) * inv53 < p and w not in cluster:
                cluster.add(w)
                queue.append(w)
    return cluster


def _bulk_box_cluster_sizes(spec: TorusSpec, p: float, stream: rnd.RandomStream, cap: int):
    """In-box sizes of every distinct bulk cluster meeting the box.

    One shared bond-status cache per replicate keeps each Z^d bond at a
    single coin across the per-vertex explorations. Returns (sizes,
    censored) where censored marks any cluster truncated at cap vertices.
    """
    offsets = lat.neighbor_offsets(spec)
    key = stream.key
    fold, mix, inv53 = rnd.bond_fold, rnd.mix64, 2.0**-53
    assigned: set[Vertex] = set()
    bond_occ: dict = {}
    sizes = []
    censored = False
    for x in domain_vertices(spec):
        if x in assigned:
            continue
        cluster = {x}
        queue = deque([x])
        while queue:
            v = queue.popleft()
            for off in offsets:
                w = tuple(c + o for c, o in zip(v, off))
                if w in cluster:
                    continue
                bond = (v, w) if v < w else (w, v)
                occ = bond_occ.get(bond)
                if occ is None:
                    occ = (mix(key ^ fold(bond[0] + bond[1])) >> 11) * inv53 < p
                    bond_occ[bond] = occ
                if occ:
                    cluster.add(w)
                    if len(cluster) >= cap:
                        censored = True
                        queue.clear()
                        break
                    queue.append(w)
        inside = [v for v in cluster if spec.in_domain(v)]
        assigned.update(inside)
        sizes.append(len(inside))
    return sizes, censored


# ---------------------------------------------------------------------------
# Four-point conditional connectivity.


@dataclass
class FourPointResult:
    """P(X1<->X3 | X1<->X2, X3<->X4) with its building blocks."""

    bc: BoundaryCondition
    conditional: Estimate
    joint4: Estimate
    pair2: Estimate
    conditioning_count: float
    method: str
    censored_fraction: float
    n: int


def _sizes_for_bc(bc, spec, p, stream, cap):
    if bc == BoundaryCondition.PERIODIC:
        labels = clu.decompose_labels(spec, p, stream)
        return np.bincount(labels).astype(np.int64), False
    if bc == BoundaryCondition.FREE:
        labels = free_labels(spec, p, stream)
        return np.bincount(labels).astype(np.int64), False
    sizes, censored = _bulk_box_cluster_sizes(spec, p, stream, cap)
    return np.asarray(sizes, dtype=np.int64), censored


def _four_point_analytic_block(lo, hi, bc, spec, p, cap, seed):
    volume = spec.volume
    nums = np.empty(hi - lo)
    dens = np.empty(hi - lo)
    censored = 0
    for idx, sid in enumerate(range(lo, hi)):
        sizes, cens = _sizes_for_bc(bc, spec, p, rnd.RandomStream(seed, sid), cap)
        censored += cens
        s2 = float((sizes**2).sum()) / volume**2
        s4 = float((sizes**4).sum()) / volume**4
        nums[idx] = s4
        dens[idx] = s2 * s2
    return est.BivarAcc.from_values(nums, dens, censored)


def _four_point_sampled_block(lo, hi, bc, spec, p, cap, seed):
    verts = domain_vertices(spec)
    volume = spec.volume
    num = den = 0
    censored = 0
    pair_vals = np.empty(hi - lo)
    joint_vals = np.empty(hi - lo)
    for idx, sid in enumerate(range(lo, hi)):
        stream = rnd.RandomStream(seed, sid)
        pts = [verts[rnd.uniform_vertex_index(stream, volume, slot)] for slot in range(4)]
        x1, x2, x3, x4 = pts
        if bc == BoundaryCondition.BULK:
            graph = clu.Lattice(spec)
            res1 = clu.explore_cluster(graph, x1, p, stream, cap)
            censored += res1.censored
            c12 = x2 in res1.cluster
            c13 = x3 in res1.cluster
            c14 = x4 in res1.cluster
            if c13:
                c34 = c14
            else:
                res3 = clu.explore_cluster(graph, x3, p, stream, cap)
                censored += res3.censored
                c34 = x4 in res3.cluster
        else:
            if bc == BoundaryCondition.PERIODIC:
                labels = clu.decompose_labels(spec, p, stream)
            else:
                labels = free_labels(spec, p, stream)
            vidx = lat.vertex_index(spec)
            l1, l2, l3, l4 = (labels[vidx[x]] for x in pts)
            c12, c13, c14 = l1 == l2, l1 == l3, l1 == l4
            c34 = l3 == l4
        pair_event = c12 and c34
        joint_event = c12 and c13 and c14
        den += pair_event
        num += joint_event
        pair_vals[idx] = 1.0 if pair_event else 0.0
        joint_vals[idx] = 1.0 if joint_event else 0.0
    acc = est.BivarAcc.from_values(joint_vals, pair_vals, censored)
    return acc, num, den


def four_point_experiment(
    bc: BoundaryCondition,
    spec: TorusSpec,
    p: float,
    n: int,
    cap: int,
    seed: int,
    method: str = "analytic-points",
    workers: int = 1,
) -> FourPointResult:
    """Estimate the four-point conditional for four uniform box points.

    The default method integrates over the points analytically given each
    revealed configuration (the conditional moments are plain power sums of
    cluster sizes), which keeps the estimator usable where the conditioning
    event is rare; method="sampled" draws the four points and counts events
    literally, raising EmptyConditioning when the conditioning never occurs.
    """
    bc = BoundaryCondition(bc)
    if n < 2:
        raise InvalidSpec(f"need n >= 2, got {n}")
    if method == "analytic-points":
        parts = parallel.run_blocks(
            _four_point_analytic_block, n, (bc, spec, p, cap, seed), workers
        )
        acc = parallel.merge_all(parts)
        conditional = acc.ratio_estimate()
        return FourPointResult(
            bc=bc,
            conditional=conditional,
            joint4=acc.x_estimate(),
            pair2=acc.y_estimate(),
            conditioning_count=acc.my * acc.n,
            method=method,
            censored_fraction=acc.censored / acc.n,
            n=n,
        )
    if method != "sampled":
        raise InvalidSpec(f"unknown method {method!r}")
    parts = parallel.run_blocks(
        _four_point_sampled_block, n, (bc, spec, p, cap, seed), workers
    )
    acc = parallel.merge_all([a for a, _, _ in parts])
    num = sum(x for _, x, _ in parts)
    den = sum(x for _, _, x in parts)
    if den == 0:
        raise EmptyConditioning(
            f"conditioning event never occurred in {n} replicates; the "
            "analytic-points method remains applicable"
        )
    ratio = num / den
    conditional = Estimate(ratio, math.sqrt(max(ratio * (1 - ratio), 0.0) / den), den)
    return FourPointResult(
        bc=bc,
        conditional=conditional,
        joint4=acc.x_estimate(),
        pair2=acc.y_estimate(),
        conditioning_count=den,
        method=method,
        censored_fraction=acc.censored / acc.n,
        n=n,
    )


# ---------------------------------------------------------------------------
# Third-moment growth in the box width.


@dataclass
class ThirdMomentResult:
    exponent: Estimate
    fit: LineFit
    per_r: list  # (r, Estimate)
    bound_exponent: float
    within_bound: bool


def third_moment_growth(
    d: int,
    r_list: list[int],
    p: float,
    n: int,
    cap: int,
    seed: int,
    model: str = lat.NEAREST_NEIGHBOR,
    L: int | None = None,
    workers: int = 1,
    tolerance: float = 0.5,
) -> ThirdMomentResult:
    """Fit the growth exponent of E|C_Z(center) ^ box|^3 in the box width r.

    The mean-field prediction bounds the exponent by 10.
    """
    if sorted(r_list) != list(r_list) or len(r_list) < 3:
        raise InvalidSpec("r_list must be increasing with at least 3 entries")
    per_r = []
    pts = []
    origin = (0,) * d
    for k, r in enumerate(r_list):
        spec = TorusSpec(d, r, model, L)
        e = est.cluster_moment_bulk(spec, origin, 3, p, n, cap, seed + k, workers=workers)
        per_r.append((r, e))
        rel = e.stderr / e.mean if e.mean > 0 else 1.0
        pts.append((r, e.mean, 1.0 / max(rel**2, 1e-12)))
    fit = critical.exponent_fit(pts)
    return ThirdMomentResult(
        exponent=Estimate(fit.slope, fit.slope_stderr, len(r_list)),
        fit=fit,
        per_r=per_r,
        bound_exponent=10.0,
        within_bound=fit.slope <= 10.0 + tolerance,
    )


# ---------------------------------------------------------------------------
# Long-path probability: torus connections rarely come from short Z^d paths.


@dataclass
class LongPathResult:
    epsilons: list[float]
    estimates: list[Estimate]
    conditioning_count: int
    censored_fraction: float
    n: int


def _long_path_block(lo, hi, spec, p, cap, seed, epsilons):
    verts = domain_vertices(spec)
    volume = spec.volume
    origin = (0,) * spec.d
    scale = volume ** (1.0 / 6.0)
    hits = np.zeros(len(epsilons), dtype=np.int64)
    den = 0
    censored = 0
    for sid in range(lo, hi):
        stream = rnd.RandomStream(seed, sid)
        result = cpl.coupled_explore(spec, p, stream, cap)
        censored += result.censored
        x = verts[rnd.uniform_vertex_index(stream, volume, 0)]
        if x not in result.torus_cluster:
            continue
        den += 1
        best = math.inf
        for y in result.lattice_cluster:
            if y == origin:
                continue  # the origin itself is not an admissible witness
            if lat.canonical_class(y, spec) == x:
                norm = math.sqrt(sum(c * c for c in y))
                if norm < best:
                    best = norm
        for k, eps in enumerate(epsilons):
            if best <= eps * scale:
                hits[k] += 1
    return hits, den, censored


def long_path_experiment(
    spec: TorusSpec,
    p: float,
    epsilon_list: list[float],
    n: int,
    cap: int,
    seed: int,
    workers: int = 1,
) -> LongPathResult:
    """Among replicates whose torus cluster reaches a uniform point X, the
    fraction where some r-equivalent lattice copy of X within Euclidean
    distance eps * V^(1/6) joins the lattice cluster, per eps.

    At eps = 0 the estimate is exactly 0: the origin is excluded as witness,
    and no other copy has norm 0.
    """
    epsilons = list(epsilon_list)
    if any(e < 0 for e in epsilons):
        raise InvalidSpec("epsilons must be nonnegative")
    parts = parallel.run_blocks(_long_path_block, n, (spec, p, cap, seed, epsilons), workers)
    hits = np.sum([h for h, _, _ in parts], axis=0)
    den = sum(d_ for _, d_, _ in parts)
    censored = sum(c for _, _, c in parts)
    if den == 0:
        raise EmptyConditioning(f"no torus connection to X in {n} replicates")
    estimates = []
    for k in range(len(epsilons)):
        frac = hits[k] / den
        estimates.append(Estimate(frac, math.sqrt(max(frac * (1 - frac), 0.0) / den), den))
    return LongPathResult(epsilons, estimates, den, censored / n, n)


# ---------------------------------------------------------------------------
# Shared-randomness containment checks.


def _containment_block(lo, hi, spec, p, cap, seed):
    origin = (0,) * spec.d
    bulk_viol = periodic_viol = skipped = 0
    for sid in range(lo, hi):
        stream = rnd.RandomStream(seed, sid)
        free = free_cluster(spec, origin, p, stream)
        bulk = clu.explore_cluster(clu.Lattice(spec), origin, p, stream, cap)
        if bulk.censored:
            skipped += 1
        elif not free <= bulk.cluster:
            bulk_viol += 1
        torus = clu.explore_cluster(clu.Torus(spec), origin, p, stream, cap=spec.volume)
        if not free <= torus.cluster:
            periodic_viol += 1
    return bulk_viol, periodic_viol, skipped


def containment_check(spec: TorusSpec, p: float, n: int, cap: int, seed: int,
                      workers: int = 1) -> dict:
    """Count violations of free <= bulk-in-box and free <= periodic under the
    shared bond randomness; both counts should be zero."""
    parts = parallel.run_blocks(_containment_block, n, (spec, p, cap, seed), workers)
    return {
        "n": n,
        "free_not_in_bulk": sum(a for a, _, _ in parts),
        "free_not_in_periodic": sum(b for _, b, _ in parts),
        "censored_skipped": sum(c for _, _, c in parts),
    }
