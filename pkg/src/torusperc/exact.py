"""Exact enumeration over all bond configurations of tiny tori.

For B = V*degree/2 bonds the 2^B configurations are summed with exact
connectivity per configuration, giving an oracle for every Monte Carlo
estimator, plus exact checkers for the positive-correlation, disjoint
occurrence, and three-point tree bounds used by the inequality suite.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .errors import TooLarge
from .lattice import TorusSpec, Vertex, canonical_class, domain_vertices, vertex_index
from . import cluster as clu

ENUM_MAX_BONDS = 24
TABLE_MAX_BONDS = 20

PairEvent = tuple[Vertex, Vertex]


@dataclass
class ExactMeasure:
    """Exact connectivity functionals of one (spec, p)."""

    spec: TorusSpec
    p: float
    tau: dict[Vertex, float]
    chi: float
    e_cmax: float
    cmax_law: dict[int, float]
    connected3: dict[tuple[Vertex, Vertex], float]
    cluster0_law: dict[int, float] = field(default_factory=dict)


def _bond_pairs(spec: TorusSpec) -> list[tuple[int, int]]:
    i0, i1, _ = clu.torus_bond_arrays(spec)
    return list(zip(i0.tolist(), i1.tolist()))


def _check_enumerable(spec: TorusSpec, limit: int) -> int:
    bonds = spec.volume * spec.degree // 2
    if bonds > limit:
        raise TooLarge(
            f"{bonds} bonds exceed the {limit}-bond enumeration cap (2^B configurations)"
        )
    return bonds


@lru_cache(maxsize=4)
def config_table(spec: TorusSpec):
    """Per-configuration partition data for every one of the 2^B configs.

    Returns (labels, sum_sq, max_size, popcount): labels is (2^B, V) uint8
    with rows giving each vertex's component root, the rest are per-config
    scalars. Cached per spec; all p-dependent quantities are dot products
    against this table.
    """
    nbonds = _check_enumerable(spec, TABLE_MAX_BONDS)
    V = spec.volume
    pairs = _bond_pairs(spec)
    nconf = 1 << nbonds
    labels = np.empty((nconf, V), dtype=np.uint8)
    sum_sq = np.empty(nconf, dtype=np.int64)
    max_size = np.empty(nconf, dtype=np.int32)
    rng_v = range(V)
    for cfg in range(nconf):
        parent = list(rng_v)
        m = cfg
        j = 0
        while m:
            if m & 1:
                a, b = pairs[j]
                while parent[a] != a:
                    parent[a] = parent[parent[a]]
                    a = parent[a]
                while parent[b] != b:
                    parent[b] = parent[parent[b]]
                    b = parent[b]
                if a != b:
                    parent[b] = a
            m >>= 1
            j += 1
        roots = [0] * V
        sizes = [0] * V
        for v in rng_v:
            x = v
            while parent[x] != x:
                parent[x] = parent[parent[x]]
                x = parent[x]
            roots[v] = x
            sizes[x] += 1
        labels[cfg] = roots
        ssq = 0
        mx = 1
        for s in sizes:
            if s:
                ssq += s * s
                if s > mx:
                    mx = s
        sum_sq[cfg] = ssq
        max_size[cfg] = mx
    pop = np.bitwise_count(np.arange(nconf, dtype=np.uint32)).astype(np.int64)
    return labels, sum_sq, max_size, pop


def _weights(p: float, nbonds: int, popcount: np.ndarray) -> np.ndarray:
    pk = np.array([p**k * (1.0 - p) ** (nbonds - k) for k in range(nbonds + 1)])
    return pk[popcount]


def enumerate_measure(
    spec: TorusSpec, p: float, pairs: list[PairEvent] | None = None, workers: int = 1
) -> ExactMeasure:
    """Exact connectivity measure by summing all 2^B configurations.

    Up to TABLE_MAX_BONDS the cached per-configuration table is used and all
    two- and three-point functionals are produced; between that and
    ENUM_MAX_BONDS a streaming pass computes tau, chi, the maximal-cluster
    law, and only the requested connected3 pairs.
    """
    nbonds = _check_enumerable(spec, ENUM_MAX_BONDS)
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"p must be in [0,1], got {p}")
    verts = domain_vertices(spec)
    vidx = vertex_index(spec)
    origin_col = vidx[(0,) * spec.d]
    if nbonds <= TABLE_MAX_BONDS:
        labels, sum_sq, max_size, pop = config_table(spec)
        w = _weights(p, nbonds, pop)
        eq0 = labels == labels[:, origin_col : origin_col + 1]
        # clamp the last-ulp overshoot of pairwise summation
        tau = {x: min(1.0, max(0.0, float(w[eq0[:, ix]].sum()))) for ix, x in enumerate(verts)}
        chi = float(sum(tau.values()))
        e_cmax = float((w * max_size).sum())
        law = np.bincount(max_size, weights=w)
        cmax_law = {s: float(q) for s, q in enumerate(law) if q > 0.0}
        csizes = eq0.sum(axis=1)
        law0 = np.bincount(csizes, weights=w)
        cluster0_law = {s: float(q) for s, q in enumerate(law0) if q > 0.0}
        wanted = pairs if pairs is not None else [
            (x, y) for x in verts for y in verts
        ]
        connected3 = {
            (x, y): float(w[eq0[:, vidx[x]] & eq0[:, vidx[y]]].sum())
            for x, y in wanted
        }
        return ExactMeasure(spec, p, tau, chi, e_cmax, cmax_law, connected3, cluster0_law)
    return _enumerate_streaming(spec, p, pairs or [])


def _enumerate_streaming(spec: TorusSpec, p: float, pairs: list[PairEvent]) -> ExactMeasure:
    """Single pass over 2^B configurations with compensated accumulation."""
    nbonds = spec.volume * spec.degree // 2
    V = spec.volume
    bond_pairs = _bond_pairs(spec)
    verts = domain_vertices(spec)
    vidx = vertex_index(spec)
    origin_col = vidx[(0,) * spec.d]
    pair_idx = [(vidx[x], vidx[y]) for x, y in pairs]
    pk = [p**k * (1.0 - p) ** (nbonds - k) for k in range(nbonds + 1)]

    tau_s = np.zeros(V)
    tau_c = np.zeros(V)  # Kahan compensations
    law = np.zeros(V + 1)
    law0 = np.zeros(V + 1)
    ecmax_s = ecmax_c = 0.0
    p3_s = np.zeros(len(pair_idx))
    p3_c = np.zeros(len(pair_idx))

    for cfg in range(1 << nbonds):
        parent = list(range(V))
        m = cfg
        j = 0
        bits = 0
        while m:
            if m & 1:
                bits += 1
                a, b = bond_pairs[j]
                while parent[a] != a:
                    parent[a] = parent[parent[a]]
                    a = parent[a]
                while parent[b] != b:
                    parent[b] = parent[parent[b]]
                    b = parent[b]
                if a != b:
                    parent[b] = a
            m >>= 1
            j += 1
        w = pk[bits]
        roots = [0] * V
        sizes = [0] * V
        for v in range(V):
            x = v
            while parent[x] != x:
                parent[x] = parent[parent[x]]
                x = parent[x]
            roots[v] = x
            sizes[x] += 1
        r0 = roots[origin_col]
        for v in range(V):
            if roots[v] == r0:
                y = w - tau_c[v]
                t = tau_s[v] + y
                tau_c[v] = (t - tau_s[v]) - y
                tau_s[v] = t
        mx = max(s for s in sizes if s) if any(sizes) else 1
        law[mx] += w
        law0[sizes[r0]] += w
        y = w * mx - ecmax_c
        t = ecmax_s + y
        ecmax_c = (t - ecmax_s) - y
        ecmax_s = t
        for k, (ix, iy) in enumerate(pair_idx):
            if roots[ix] == r0 and roots[iy] == r0:
                y = w - p3_c[k]
                t = p3_s[k] + y
                p3_c[k] = (t - p3_s[k]) - y
                p3_s[k] = t

    tau = {x: min(1.0, max(0.0, float(tau_s[i]))) for i, x in enumerate(verts)}
    return ExactMeasure(
        spec,
        p,
        tau,
        float(tau_s.sum()),
        float(ecmax_s),
        {s: float(q) for s, q in enumerate(law) if q > 0.0},
        {pairs[k]: float(p3_s[k]) for k in range(len(pairs))},
        {s: float(q) for s, q in enumerate(law0) if q > 0.0},
    )


def _pair_indicator(spec: TorusSpec, u: Vertex, v: Vertex) -> np.ndarray:
    labels, _, _, _ = config_table(spec)
    vidx = vertex_index(spec)
    return labels[:, vidx[canonical_class(u, spec)]] == labels[:, vidx[canonical_class(v, spec)]]


def check_fkg(spec: TorusSpec, p: float, event_a: PairEvent, event_b: PairEvent) -> float:
    """P(A and B) - P(A)P(B) for connection events; predicted >= 0."""
    _check_enumerable(spec, TABLE_MAX_BONDS)
    _, _, _, pop = config_table(spec)
    w = _weights(p, spec.volume * spec.degree // 2, pop)
    ia = _pair_indicator(spec, *event_a)
    ib = _pair_indicator(spec, *event_b)
    return float(w[ia & ib].sum() - w[ia].sum() * w[ib].sum())


@lru_cache(maxsize=64)
def _disjoint_indicator(spec: TorusSpec, event_a: PairEvent, event_b: PairEvent) -> tuple:
    """Per-config indicator of A and B occurring on disjoint bond sets.

    Decided by exhausting vertex-simple occupied u-v paths and testing s-t
    connectivity in the occupied graph with that path's bonds removed; a
    connection event holds on disjoint bonds iff such a witness pair exists.
    """
    nbonds = _check_enumerable(spec, TABLE_MAX_BONDS)
    vidx = vertex_index(spec)
    (ua, va) = (vidx[canonical_class(x, spec)] for x in event_a)
    (ub, vb) = (vidx[canonical_class(x, spec)] for x in event_b)
    pairs = _bond_pairs(spec)
    both = _pair_indicator(spec, *event_a) & _pair_indicator(spec, *event_b)
    out = np.zeros(both.size, dtype=bool)
    V = spec.volume

    def connected_without(adj, s, t, banned: frozenset) -> bool:
        if s == t:
            return True
        seen = {s}
        dq = deque([s])
        while dq:
            x = dq.popleft()
            for y, bidx in adj[x]:
                if bidx in banned or y in seen:
                    continue
                if y == t:
                    return True
                seen.add(y)
                dq.append(y)
        return False

    for cfg in np.flatnonzero(both):
        adj = [[] for _ in range(V)]
        m = int(cfg)
        j = 0
        while m:
            if m & 1:
                a, b = pairs[j]
                adj[a].append((b, j))
                adj[b].append((a, j))
            m >>= 1
            j += 1

        found = False
        path_bonds: list[int] = []
        on_path = [False] * V
        on_path[ua] = True

        def dfs(x: int) -> bool:
            nonlocal found
            if x == va:
                if connected_without(adj, ub, vb, frozenset(path_bonds)):
                    found = True
                return found
            for y, bidx in adj[x]:
                if on_path[y]:
                    continue
                on_path[y] = True
                path_bonds.append(bidx)
                if dfs(y):
                    return True
                path_bonds.pop()
                on_path[y] = False
            return False

        if ua == va:
            found = connected_without(adj, ub, vb, frozenset())
        else:
            dfs(ua)
        out[cfg] = found
    return tuple(out.tolist())


def check_bk(spec: TorusSpec, p: float, event_a: PairEvent, event_b: PairEvent) -> float:
    """P(A)P(B) - P(A on disjoint bonds with B); predicted >= 0."""
    _check_enumerable(spec, TABLE_MAX_BONDS)
    _, _, _, pop = config_table(spec)
    w = _weights(p, spec.volume * spec.degree // 2, pop)
    ia = _pair_indicator(spec, *event_a)
    ib = _pair_indicator(spec, *event_b)
    disj = np.array(_disjoint_indicator(spec, tuple(event_a), tuple(event_b)), dtype=bool)
    return float(w[ia].sum() * w[ib].sum() - w[disj].sum())


def check_tree_graph(spec: TorusSpec, p: float, x: Vertex, y: Vertex) -> float:
    """sum_z tau(z) tau(x-z) tau(y-z) - P(0 <-> x and 0 <-> y); predicted >= 0.

    Differences are taken on the torus (componentwise mod r).
    """
    measure = enumerate_measure(spec, p, pairs=[(x, y)])
    tau = measure.tau
    rhs = 0.0
    for z in domain_vertices(spec):
        tz = tau[z]
        if tz == 0.0:
            continue
        xz = canonical_class(tuple(a - b for a, b in zip(x, z)), spec)
        yz = canonical_class(tuple(a - b for a, b in zip(y, z)), spec)
        rhs += tz * tau[xz] * tau[yz]
    return rhs - measure.connected3[(x, y)]


@dataclass
class Lemma51Record:
    """One numeric evaluation of the torus-vs-lattice susceptibility bound."""

    spec: TorusSpec
    p: float
    chi_torus: float
    chi_torus_stderr: float
    chi_torus_exact: bool
    chi_lattice: float
    chi_lattice_stderr: float
    tilde_chi: float
    tilde_chi_stderr: float
    rhs: float
    rhs_stderr: float
    margin: float
    holds_within_3sigma: bool


def lemma51_check(
    spec: TorusSpec,
    p: float,
    n: int,
    cap: int,
    radius_max: float | None,
    seed: int,
    workers: int = 1,
) -> Lemma51Record:
    """Evaluate chi_T >= chi_Z (1 - chi_Z*tilde_chi - p Omega^2 chi_Z^2 tilde_chi).

    chi_T comes from the enumeration oracle when the spec is enumerable and
    from Monte Carlo otherwise; chi_Z and tilde_chi are Monte Carlo. The
    verdict allows three propagated standard deviations of slack.
    """
    from . import estimators as est  # local import to avoid a cycle

    if spec.volume * spec.degree // 2 <= ENUM_MAX_BONDS:
        chi_t, chi_t_err, exact_t = enumerate_measure(spec, p, pairs=[]).chi, 0.0, True
    else:
        e = est.estimate_chi_torus(spec, p, n, seed, workers=workers)
        chi_t, chi_t_err, exact_t = e.mean, e.stderr, False
    ez = est.estimate_chi_lattice(spec, p, n, cap, seed + 1, workers=workers)
    tc = est.estimate_tilde_chi(spec, p, n, cap, radius_max, seed + 2, workers=workers)
    chi_z, sz = ez.mean, ez.stderr
    tch, st = tc.estimate.mean, tc.estimate.stderr
    omega = spec.degree
    rhs = chi_z * (1.0 - chi_z * tch - p * omega**2 * chi_z**2 * tch)
    d_chi = 1.0 - 2.0 * chi_z * tch - 3.0 * p * omega**2 * chi_z**2 * tch
    d_tch = -(chi_z**2) - p * omega**2 * chi_z**3
    rhs_err = ((d_chi * sz) ** 2 + (d_tch * st) ** 2) ** 0.5
    margin = chi_t - rhs
    sigma = (chi_t_err**2 + rhs_err**2) ** 0.5
    return Lemma51Record(
        spec=spec,
        p=p,
        chi_torus=chi_t,
        chi_torus_stderr=chi_t_err,
        chi_torus_exact=exact_t,
        chi_lattice=chi_z,
        chi_lattice_stderr=sz,
        tilde_chi=tch,
        tilde_chi_stderr=st,
        rhs=rhs,
        rhs_stderr=rhs_err,
        margin=margin,
        holds_within_3sigma=margin >= -3.0 * sigma,
    )
