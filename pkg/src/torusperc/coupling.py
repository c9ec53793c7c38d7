"""Joint exploration of the torus and lattice clusters of the origin.

One Z^d randomness source drives both clusters. Stage one explores from the
origin on Z^d but gives every r-equivalence class of bonds a single status,
decided by the first representative explored (its own coin); equivalent bonds
touched later are recorded gray and skipped, so the resulting class set is
distributed exactly as the torus cluster. Stage two un-colors the gray bonds,
re-randomizes them independently, and continues a plain Z^d exploration from
every vertex where a black bond meets a formerly gray one, which extends the
stage-one black set to the full lattice cluster. The torus cluster size never
exceeds the lattice one, and every stage-one black bond stays black.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

from .errors import InvalidSpec
from .lattice import Bond, TorusSpec, Vertex
from . import lattice as lat
from . import randomness as rnd

BLACK = 1
WHITE = 2
GRAY = 3

COLOR_NAMES = {BLACK: "black", WHITE: "white", GRAY: "gray"}

STAGE2_TAG = 1  # re-randomization tag for formerly gray bonds


@dataclass
class ColorLedger:
    """Bond colors of one coupled exploration.

    class_colors: status of each explored r-equivalence class, keyed by the
    canonical bond; lattice_colors: every bond touched in stage one (black or
    white if it was the class's first representative, gray otherwise);
    stage2_colors: final statuses of all explored Z^d bonds, stage-one black
    and white carried over.
    """

    class_colors: dict[Bond, int] = field(default_factory=dict)
    lattice_colors: dict[Bond, int] = field(default_factory=dict)
    stage2_colors: dict[Bond, int] = field(default_factory=dict)


@dataclass
class CoupledResult:
    """Both clusters of the origin plus the color bookkeeping."""

    spec: TorusSpec
    torus_cluster: set[Vertex]
    lattice_cluster: set[Vertex]
    ledger: ColorLedger
    censored: bool
    stage2_black_with_white_rep: int


def coupled_explore(
    spec: TorusSpec,
    p: float,
    stream: rnd.RandomStream,
    cap: int,
    trace=None,
) -> CoupledResult:
    """Run the two-stage exploration from the origin.

    cap bounds the lattice cluster only (the torus stage always terminates);
    a censored result truncates lattice_cluster at cap vertices. trace, if
    given, is called with one dict per colored bond.
    """
    if cap < 1:
        raise InvalidSpec(f"cap must be >= 1, got {cap}")
    if not 0.0 <= p <= 1.0:
        raise InvalidSpec(f"p must be in [0,1], got {p}")
    d, r, lo = spec.d, spec.r, spec.lo
    offsets = lat.neighbor_offsets(spec)
    key = stream.key
    fold = rnd.bond_fold
    mix = rnd.mix64
    inv53 = 2.0**-53

    origin = (0,) * d
    class_colors: dict[Bond, int] = {}
    lattice_colors: dict[Bond, int] = {}
    black_vertices: set[Vertex] = set()

    # Stage one: torus-law exploration embedded in Z^d.
    queue = deque([origin])
    queued = {origin}
    while queue:
        v = queue.popleft()
        for off in offsets:
            w = tuple(c + o for c, o in zip(v, off))
            bond = (v, w) if v < w else (w, v)
            if bond in lattice_colors:
                continue
            e0 = bond[0]
            c0 = tuple((c - lo) % r + lo for c in e0)
            if c0 == e0:
                cbond = bond
            else:
                shift = tuple(a - b for a, b in zip(c0, e0))
                cbond = (c0, tuple(c + s for c, s in zip(bond[1], shift)))
            cls = class_colors.get(cbond)
            if cls is None:
                u = (mix(key ^ fold(bond[0] + bond[1])) >> 11) * inv53
                color = BLACK if u < p else WHITE
                class_colors[cbond] = color
                lattice_colors[bond] = color
                if trace is not None:
                    trace({"stage": 1, "bond": [list(bond[0]), list(bond[1])],
                           "color": COLOR_NAMES[color]})
                if color == BLACK:
                    black_vertices.add(v)
                    black_vertices.add(w)
                    if w not in queued:
                        queued.add(w)
                        queue.append(w)
            else:
                lattice_colors[bond] = GRAY
                if trace is not None:
                    trace({"stage": 1, "bond": [list(bond[0]), list(bond[1])],
                           "color": "gray"})

    torus_cluster = {tuple((c - lo) % r + lo for c in v) for v in black_vertices}
    torus_cluster.add(origin)

    # Stage two: continue on Z^d from vertices where black meets gray.
    status = {b: c for b, c in lattice_colors.items() if c != GRAY}
    frontier = set()
    for bond, color in lattice_colors.items():
        if color == GRAY:
            if bond[0] in black_vertices:
                frontier.add(bond[0])
            if bond[1] in black_vertices:
                frontier.add(bond[1])

    lattice_cluster = set(black_vertices)
    lattice_cluster.add(origin)
    censored = len(lattice_cluster) >= cap
    stage2_black_with_white_rep = 0
    if not censored:
        queue = deque(sorted(frontier))
        queued = set(frontier)
        while queue and not censored:
            v = queue.popleft()
            for off in offsets:
                w = tuple(c + o for c, o in zip(v, off))
                bond = (v, w) if v < w else (w, v)
                if bond in status:
                    continue
                e0 = bond[0]
                c0 = tuple((c - lo) % r + lo for c in e0)
                if c0 == e0:
                    cbond = bond
                else:
                    shift = tuple(a - b for a, b in zip(c0, e0))
                    cbond = (c0, tuple(c + s for c, s in zip(bond[1], shift)))
                rep_color = class_colors.get(cbond)
                tag = STAGE2_TAG if rep_color is not None else 0
                u = (mix(key ^ fold(bond[0] + bond[1], tag)) >> 11) * inv53
                if u < p:
                    status[bond] = BLACK
                    if rep_color == WHITE:
                        stage2_black_with_white_rep += 1
                    if trace is not None:
                        trace({"stage": 2, "bond": [list(bond[0]), list(bond[1])],
                               "color": "black"})
                    lattice_cluster.add(w)
                    lattice_cluster.add(v)
                    if len(lattice_cluster) >= cap:
                        censored = True
                        break
                    if w not in queued:
                        queued.add(w)
                        queue.append(w)
                else:
                    status[bond] = WHITE
                    if trace is not None:
                        trace({"stage": 2, "bond": [list(bond[0]), list(bond[1])],
                               "color": "white"})

    ledger = ColorLedger(class_colors, lattice_colors, status)
    return CoupledResult(
        spec=spec,
        torus_cluster=torus_cluster,
        lattice_cluster=lattice_cluster,
        ledger=ledger,
        censored=censored,
        stage2_black_with_white_rep=stage2_black_with_white_rep,
    )


def verify_coupling_invariants(result: CoupledResult) -> list[str]:
    """Check the almost-sure relations between the two clusters.

    Returns human-readable violation strings; an empty list means all hold.
    (a) |torus cluster| <= |lattice cluster| unless the lattice side was
    censored; (b) every torus-cluster class has a representative in the
    lattice cluster; (c) a lattice vertex whose class is missing from the
    torus cluster requires at least one stage-two black bond whose class
    representative came up white.
    """
    spec = result.spec
    violations = []
    if not result.censored and len(result.torus_cluster) > len(result.lattice_cluster):
        violations.append(
            f"(a) torus cluster size {len(result.torus_cluster)} exceeds "
            f"lattice cluster size {len(result.lattice_cluster)}"
        )
    classes = {lat.canonical_class(v, spec) for v in result.lattice_cluster}
    missing = result.torus_cluster - classes
    if missing:
        violations.append(
            f"(b) torus classes without lattice representative: {sorted(missing)[:4]}"
        )
    extra = classes - result.torus_cluster
    if extra and result.stage2_black_with_white_rep < 1:
        violations.append(
            "(c) lattice-only classes present but no stage-two black bond "
            "had a white class representative"
        )
    return violations


def stage1_black_subset_stage2(result: CoupledResult) -> bool:
    """Structural inclusion of stage-one black bonds in the final black set."""
    led = result.ledger
    return all(
        led.stage2_colors.get(b) == BLACK
        for b, c in led.lattice_colors.items()
        if c == BLACK
    )


def _check_block(lo, hi, spec, p, cap, seed):
    import numpy as np

    hist = np.zeros(spec.volume + 1, dtype=np.int64)
    violations = subset_failures = censored = 0
    for sid in range(lo, hi):
        res = coupled_explore(spec, p, rnd.RandomStream(seed, sid), cap)
        censored += res.censored
        if verify_coupling_invariants(res):
            violations += 1
        if not stage1_black_subset_stage2(res):
            subset_failures += 1
        hist[len(res.torus_cluster)] += 1
    return hist, violations, subset_failures, censored


def marginal_check(spec: TorusSpec, p: float, n: int, cap: int, seed: int,
                   workers: int = 1, trace=None) -> dict:
    """Run n coupled replicates, verify the almost-sure relations on each,
    and chi-square the torus-cluster size distribution at significance 1e-3.

    Enumerable specs compare against the exact origin-cluster law; larger
    ones against direct torus explorations with a fresh seed. The trace
    callback, when given, forces a single-process run.
    """
    import numpy as np
    from scipy import stats as st

    from . import cluster as clu
    from . import estimators
    from . import exact
    from . import parallel

    if trace is not None:
        hist = np.zeros(spec.volume + 1, dtype=np.int64)
        violations = subset_failures = censored = 0
        for sid in range(n):
            res = coupled_explore(spec, p, rnd.RandomStream(seed, sid), cap,
                                  trace=trace)
            censored += res.censored
            violations += bool(verify_coupling_invariants(res))
            subset_failures += not stage1_black_subset_stage2(res)
            hist[len(res.torus_cluster)] += 1
    else:
        parts = parallel.run_blocks(_check_block, n, (spec, p, cap, seed), workers)
        hist = np.sum([h for h, _, _, _ in parts], axis=0)
        violations = sum(v for _, v, _, _ in parts)
        subset_failures = sum(s for _, _, s, _ in parts)
        censored = sum(c for _, _, _, c in parts)

    bonds = spec.volume * spec.degree // 2
    expected = np.zeros(spec.volume + 1)
    if bonds <= exact.ENUM_MAX_BONDS:
        for size, q in exact.enumerate_measure(spec, p, pairs=[]).cluster0_law.items():
            expected[size] = q * n
    else:
        for sid in range(n):
            res = clu.explore_cluster(clu.Torus(spec), (0,) * spec.d, p,
                                      rnd.RandomStream(seed + 999_331, sid),
                                      spec.volume)
            expected[len(res.cluster)] += 1
    obs, exp = estimators.pool_bins(hist, expected)
    chi2 = float(((obs - exp) ** 2 / exp).sum())
    dof = max(len(obs) - 1, 1)
    p_value = float(st.chi2.sf(chi2, dof))
    return {
        "replicates": n,
        "invariant_violations": int(violations),
        "stage1_black_subset_failures": int(subset_failures),
        "censored_fraction": censored / n,
        "torus_size_histogram": hist.tolist(),
        "torus_marginal_chi2": chi2,
        "torus_marginal_dof": dof,
        "torus_marginal_p_value": p_value,
        "torus_marginal_ok_at_1e3": p_value >= 1e-3,
    }
