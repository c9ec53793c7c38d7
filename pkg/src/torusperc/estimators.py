"""Monte Carlo estimators for the scalar observables of torus percolation.

Susceptibilities, two-point functions, correlation length, the wrap-around
two-point mass, maximal-cluster quantiles, and restricted cluster moments.
Estimates carry exact-mergeable moments so replicate blocks can be combined
in any fixed order, and censored lattice replicates are flagged rather than
silently truncated.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from itertools import product

import numpy as np

from .errors import DegenerateFit, InvalidSpec
from .fitting import LineFit, weighted_line_fit
from .lattice import TorusSpec, Vertex, canonical_class, domain_vertices
from . import cluster as clu
from . import exact
from . import parallel
from . import randomness as rnd

# Specs at or below this bond count use the cached per-configuration table;
# statistics are bit-identical to the per-replicate engines either way.
TABLE_FAST_MAX = 18

DEFAULT_PROBS = (0.01, 0.05, 0.25, 0.5, 0.75, 0.95, 0.99)


# ---------------------------------------------------------------------------
# Mergeable accumulators and the public Estimate type.


@dataclass
class MomentAcc:
    """Count/mean/M2 with exact pairwise (Chan) merging."""

    n: int = 0
    mean: float = 0.0
    m2: float = 0.0
    censored: int = 0

    @classmethod
    def from_values(cls, values, censored: int = 0) -> "MomentAcc":
        values = np.asarray(values, dtype=float)
        if values.size == 0:
            return cls()
        mean = float(values.mean())
        return cls(values.size, mean, float(((values - mean) ** 2).sum()), censored)

    def merge(self, other: "MomentAcc") -> "MomentAcc":
        if self.n == 0:
            return other
        if other.n == 0:
            return self
        n = self.n + other.n
        delta = other.mean - self.mean
        mean = self.mean + delta * other.n / n
        m2 = self.m2 + other.m2 + delta * delta * self.n * other.n / n
        return MomentAcc(n, mean, m2, self.censored + other.censored)

    def to_estimate(self) -> "Estimate":
        if self.n < 1:
            raise ValueError("no samples accumulated")
        stderr = math.sqrt(self.m2 / (self.n - 1) / self.n) if self.n > 1 else 0.0
        return Estimate(self.mean, stderr, self.n, self.censored / self.n)


@dataclass
class VectorMomentAcc:
    """Componentwise MomentAcc over a fixed-length value vector."""

    n: int = 0
    mean: np.ndarray | None = None
    m2: np.ndarray | None = None
    censored: int = 0

    @classmethod
    def from_matrix(cls, values: np.ndarray, censored: int = 0) -> "VectorMomentAcc":
        mean = values.mean(axis=0)
        return cls(values.shape[0], mean, ((values - mean) ** 2).sum(axis=0), censored)

    def merge(self, other: "VectorMomentAcc") -> "VectorMomentAcc":
        if self.n == 0:
            return other
        if other.n == 0:
            return self
        n = self.n + other.n
        delta = other.mean - self.mean
        mean = self.mean + delta * other.n / n
        m2 = self.m2 + other.m2 + delta * delta * self.n * other.n / n
        return VectorMomentAcc(n, mean, m2, self.censored + other.censored)

    def component(self, i: int) -> MomentAcc:
        return MomentAcc(self.n, float(self.mean[i]), float(self.m2[i]), self.censored)


@dataclass
class BivarAcc:
    """Joint moments of paired per-replicate values, for ratio estimators."""

    n: int = 0
    mx: float = 0.0
    my: float = 0.0
    m2x: float = 0.0
    m2y: float = 0.0
    cxy: float = 0.0
    censored: int = 0

    @classmethod
    def from_values(cls, xs, ys, censored: int = 0) -> "BivarAcc":
        xs = np.asarray(xs, dtype=float)
        ys = np.asarray(ys, dtype=float)
        mx, my = float(xs.mean()), float(ys.mean())
        return cls(
            xs.size,
            mx,
            my,
            float(((xs - mx) ** 2).sum()),
            float(((ys - my) ** 2).sum()),
            float(((xs - mx) * (ys - my)).sum()),
            censored,
        )

    def merge(self, other: "BivarAcc") -> "BivarAcc":
        if self.n == 0:
            return other
        if other.n == 0:
            return self
        n = self.n + other.n
        dx = other.mx - self.mx
        dy = other.my - self.my
        f = self.n * other.n / n
        return BivarAcc(
            n,
            self.mx + dx * other.n / n,
            self.my + dy * other.n / n,
            self.m2x + other.m2x + dx * dx * f,
            self.m2y + other.m2y + dy * dy * f,
            self.cxy + other.cxy + dx * dy * f,
            self.censored + other.censored,
        )

    def x_estimate(self) -> "Estimate":
        return MomentAcc(self.n, self.mx, self.m2x, self.censored).to_estimate()

    def y_estimate(self) -> "Estimate":
        return MomentAcc(self.n, self.my, self.m2y, self.censored).to_estimate()

    def ratio_estimate(self) -> "Estimate":
        """mean(x)/mean(y) with a delta-method standard error."""
        if self.my == 0.0:
            raise ZeroDivisionError("ratio denominator mean is zero")
        ratio = self.mx / self.my
        if self.n < 2:
            return Estimate(ratio, 0.0, self.n, self.censored / self.n)
        s2x = self.m2x / (self.n - 1)
        s2y = self.m2y / (self.n - 1)
        sxy = self.cxy / (self.n - 1)
        var = (s2x - 2.0 * ratio * sxy + ratio * ratio * s2y) / (self.my**2 * self.n)
        return Estimate(ratio, math.sqrt(max(var, 0.0)), self.n, self.censored / self.n)


@dataclass(frozen=True)
class Estimate:
    """Monte Carlo mean with its standard error and censoring bookkeeping."""

    mean: float
    stderr: float
    n: int
    censored_fraction: float = 0.0

    def merge(self, other: "Estimate") -> "Estimate":
        a = MomentAcc(self.n, self.mean, self.stderr**2 * self.n * (self.n - 1),
                      round(self.censored_fraction * self.n))
        b = MomentAcc(other.n, other.mean, other.stderr**2 * other.n * (other.n - 1),
                      round(other.censored_fraction * other.n))
        return a.merge(b).to_estimate()

    def to_json(self) -> dict:
        return {
            "mean": self.mean,
            "stderr": self.stderr,
            "n": self.n,
            "censored_fraction": self.censored_fraction,
        }


class SampleBuffer:
    """Mergeable sample store: exact values up to a limit, histogram beyond.

    Quantiles use the upper order statistic ("higher"), so constant samples
    reproduce the constant and lattice-valued laws give attained values.
    """

    EXACT_LIMIT = 1_000_000
    BINS = 4096

    def __init__(self):
        self.values: np.ndarray = np.empty(0)
        self.edges: np.ndarray | None = None
        self.counts: np.ndarray | None = None
        self.n = 0

    def add_array(self, values) -> None:
        values = np.asarray(values, dtype=float)
        self.n += values.size
        if self.edges is None:
            self.values = np.concatenate([self.values, values])
            if self.values.size > self.EXACT_LIMIT:
                self._to_sketch()
        else:
            self._bin_into(values)

    def _to_sketch(self) -> None:
        lo, hi = float(self.values.min()), float(self.values.max())
        if hi <= lo:
            hi = lo + 1.0
        self.edges = np.linspace(lo, hi, self.BINS + 1)
        self.counts = np.zeros(self.BINS, dtype=np.int64)
        self._bin_into(self.values)
        self.values = np.empty(0)

    def _bin_into(self, values: np.ndarray) -> None:
        idx = np.clip(np.searchsorted(self.edges, values, side="right") - 1, 0, self.BINS - 1)
        np.add.at(self.counts, idx, 1)

    def merge(self, other: "SampleBuffer") -> "SampleBuffer":
        out = SampleBuffer()
        if self.edges is None and other.edges is None:
            out.add_array(self.values)
            out.add_array(other.values)
            return out
        base = self if self.edges is not None else other
        out.edges = base.edges.copy()
        out.counts = base.counts.copy()
        out.n = base.n
        rest = other if base is self else self
        if rest.edges is None:
            out._bin_into(rest.values)
            out.n += rest.n
        else:
            mids = (rest.edges[:-1] + rest.edges[1:]) / 2.0
            out._bin_into(np.repeat(mids, rest.counts))
            out.n += rest.n
        return out

    def quantile(self, q: float) -> float:
        if self.n == 0:
            raise ValueError("empty sample")
        if self.edges is None:
            return float(np.quantile(self.values, q, method="higher"))
        cum = np.cumsum(self.counts)
        idx = int(np.searchsorted(cum, max(1, math.ceil(q * self.n))))
        return float(self.edges[min(idx + 1, self.BINS)])

    def summary(self, probs=DEFAULT_PROBS) -> "QuantileSummary":
        return QuantileSummary(tuple(probs), [self.quantile(q) for q in probs], self.n)

    def scaled(self, factor: float) -> "SampleBuffer":
        out = SampleBuffer()
        if self.edges is None:
            out.add_array(self.values * factor)
        else:
            out.edges = self.edges * factor
            out.counts = self.counts.copy()
            out.n = self.n
        return out


@dataclass
class QuantileSummary:
    """Empirical quantiles at fixed probability points."""

    probs: tuple
    quantiles: list
    n: int

    def to_json(self) -> dict:
        return {"probs": list(self.probs), "quantiles": list(self.quantiles), "n": self.n}


def pool_bins(observed, expected, min_expected: float = 5.0):
    """Pool adjacent histogram bins until each expected count is usable.

    Returns (observed, expected) arrays with the expected side rescaled to
    the observed total, ready for a chi-square statistic.
    """
    obs_out, exp_out = [], []
    acc_o = acc_e = 0.0
    for o, e in zip(observed, expected):
        acc_o += o
        acc_e += e
        if acc_e >= min_expected:
            obs_out.append(acc_o)
            exp_out.append(acc_e)
            acc_o = acc_e = 0.0
    if exp_out:
        obs_out[-1] += acc_o
        exp_out[-1] += acc_e
    obs = np.asarray(obs_out, dtype=float)
    exp = np.asarray(exp_out, dtype=float)
    if exp.sum() > 0:
        exp = exp * (obs.sum() / exp.sum())
    return obs, exp


def _prewarm(spec: TorusSpec, table: bool) -> None:
    """Build per-spec caches in the parent so forked workers inherit them."""
    clu.torus_bond_arrays(spec)
    if table:
        exact.config_table(spec)


def _use_table(spec: TorusSpec) -> bool:
    return spec.volume * spec.degree // 2 <= TABLE_FAST_MAX


def _config_indices(spec: TorusSpec, p: float, seed: int, lo: int, hi: int) -> np.ndarray:
    """Configuration index of each replicate in [lo, hi) from its bond coins."""
    _, _, folds = clu.torus_bond_arrays(spec)
    keys = rnd.stream_keys_np(seed, np.arange(lo, hi, dtype=np.uint64))
    idx = np.zeros(hi - lo, dtype=np.uint32)
    for j in range(folds.size):
        u = rnd.uniforms_np(keys, folds[j])
        idx |= (u < p).astype(np.uint32) << np.uint32(j)
    return idx


# ---------------------------------------------------------------------------
# Block workers (module level so they pickle for process pools).


def _decomp_block(lo, hi, spec, p, seed, want_cmax):
    """Per-replicate (sum_sq/V, cmax) over one sample-id block."""
    volume = spec.volume
    if _use_table(spec):
        _, sum_sq, max_size, _ = exact.config_table(spec)
        idx = _config_indices(spec, p, seed, lo, hi)
        chi_vals = sum_sq[idx] / volume
        cmax_vals = max_size[idx]
    else:
        chi_vals = np.empty(hi - lo)
        cmax_vals = np.empty(hi - lo, dtype=np.int64)
        for i, sid in enumerate(range(lo, hi)):
            labels = clu.decompose_labels(spec, p, rnd.RandomStream(seed, sid))
            sizes = np.bincount(labels).astype(np.int64)
            chi_vals[i] = int((sizes * sizes).sum()) / volume
            cmax_vals[i] = int(sizes.max())
    acc = MomentAcc.from_values(chi_vals)
    if not want_cmax:
        return acc
    buf = SampleBuffer()
    buf.add_array(cmax_vals)
    return acc, MomentAcc.from_values(cmax_vals.astype(float)), buf


def _chi_lattice_block(lo, hi, spec, p, seed, cap):
    graph = clu.Lattice(spec)
    origin = (0,) * spec.d
    values = np.empty(hi - lo)
    censored = 0
    for i, sid in enumerate(range(lo, hi)):
        res = clu.explore_cluster(graph, origin, p, rnd.RandomStream(seed, sid), cap)
        values[i] = len(res.cluster)
        censored += res.censored
    return MomentAcc.from_values(values, censored)


def _tau_block(lo, hi, graph_kind, spec, x, p, seed, cap):
    origin = (0,) * spec.d
    if graph_kind == "torus" and _use_table(spec):
        labels, _, _, _ = exact.config_table(spec)
        from .lattice import vertex_index

        vidx = vertex_index(spec)
        ix, i0 = vidx[canonical_class(x, spec)], vidx[origin]
        idx = _config_indices(spec, p, seed, lo, hi)
        hits = (labels[idx, ix] == labels[idx, i0]).astype(float)
        return MomentAcc.from_values(hits)
    graph = clu.Torus(spec) if graph_kind == "torus" else clu.Lattice(spec)
    values = np.empty(hi - lo)
    censored = 0
    for i, sid in enumerate(range(lo, hi)):
        res = clu.explore_cluster(
            graph, origin, p, rnd.RandomStream(seed, sid), cap, target=x
        )
        values[i] = 1.0 if (canonical_class(x, spec) if graph_kind == "torus" else x) in res.cluster else 0.0
        censored += res.censored
    return MomentAcc.from_values(values, censored)


def _class_sum_block(lo, hi, spec, p, seed, cap, targets, n_classes):
    """Per-replicate, per-residue-class counts of reached far targets."""
    graph = clu.Lattice(spec)
    origin = (0,) * spec.d
    rows = np.zeros((hi - lo, n_classes))
    censored = 0
    for i, sid in enumerate(range(lo, hi)):
        res = clu.explore_cluster(graph, origin, p, rnd.RandomStream(seed, sid), cap)
        censored += res.censored
        if len(res.cluster) > len(targets):
            for z, cls_i in targets.items():
                if z in res.cluster:
                    rows[i, cls_i] += 1.0
        else:
            for v in res.cluster:
                cls_i = targets.get(v)
                if cls_i is not None:
                    rows[i, cls_i] += 1.0
    return VectorMomentAcc.from_matrix(rows, censored)


def _moment_block(lo, hi, spec, x, k, p, seed, cap):
    graph = clu.Lattice(spec)
    values = np.empty(hi - lo)
    censored = 0
    for i, sid in enumerate(range(lo, hi)):
        res = clu.explore_cluster(graph, x, p, rnd.RandomStream(seed, sid), cap)
        censored += res.censored
        inside = sum(1 for v in res.cluster if spec.in_domain(v))
        values[i] = float(inside**k)
    return MomentAcc.from_values(values, censored)


# ---------------------------------------------------------------------------
# Public estimators.


def _validate(spec: TorusSpec, p: float, n: int) -> None:
    if not 0.0 <= p <= 1.0:
        raise InvalidSpec(f"p must be in [0,1], got {p}")
    if n < 2:
        raise InvalidSpec(f"need n >= 2 replicates, got {n}")


def estimate_chi_torus(spec: TorusSpec, p: float, n: int, seed: int, workers: int = 1) -> Estimate:
    """Torus susceptibility via the size-biased identity E[sum |C_i|^2]/V."""
    _validate(spec, p, n)
    _prewarm(spec, _use_table(spec))
    parts = parallel.run_blocks(_decomp_block, n, (spec, p, seed, False), workers)
    return parallel.merge_all(parts).to_estimate()


def estimate_chi_lattice(
    spec: TorusSpec, p: float, n: int, cap: int, seed: int, workers: int = 1
) -> Estimate:
    """Mean lattice cluster size of the origin; censored replicates contribute
    cap, so a nonzero censored_fraction marks the value as a lower bound."""
    _validate(spec, p, n)
    if cap < 1:
        raise InvalidSpec(f"cap must be >= 1, got {cap}")
    parts = parallel.run_blocks(_chi_lattice_block, n, (spec, p, seed, cap), workers)
    return parallel.merge_all(parts).to_estimate()


def estimate_tau(graph, x: Vertex, p: float, n: int, cap: int, seed: int,
                 workers: int = 1) -> Estimate:
    """Two-point function: the fraction of replicates connecting 0 to x."""
    spec = graph.spec
    _validate(spec, p, n)
    kind = "torus" if isinstance(graph, clu.Torus) else "lattice"
    _prewarm(spec, kind == "torus" and _use_table(spec))
    parts = parallel.run_blocks(_tau_block, n, (kind, spec, x, p, seed, cap), workers)
    return parallel.merge_all(parts).to_estimate()


@dataclass
class XiFit:
    """Correlation length from the decay rate of axis connectivity."""

    estimate: Estimate
    slope_fit: LineFit
    distances: list[int]
    tau_values: list[Estimate]


def estimate_xi(
    spec: TorusSpec, p: float, n_points: int, n: int, cap: int, seed: int, workers: int = 1
) -> XiFit:
    """Fit -log tau(k e_1) ~ k / xi over axis distances k = 1..n_points.

    Each distance uses its own replicate family. Raises DegenerateFit when a
    requested distance was never reached (increase n or shrink the range).
    """
    _validate(spec, p, n)
    if n_points < 3:
        raise InvalidSpec(f"need at least 3 axis distances, got {n_points}")
    graph = clu.Lattice(spec)
    taus = []
    for j, k in enumerate(range(1, n_points + 1)):
        x = (k,) + (0,) * (spec.d - 1)
        parts = parallel.run_blocks(
            _tau_block, n, ("lattice", spec, x, p, seed, cap), workers, id_base=j * n
        )
        taus.append(parallel.merge_all(parts).to_estimate())
    for k, t in zip(range(1, n_points + 1), taus):
        if t.mean <= 0.0:
            raise DegenerateFit(
                f"tau at axis distance {k} was never observed (n={n}); "
                "increase n or reduce n_points"
            )
    ks = list(range(1, n_points + 1))
    ys = [-math.log(t.mean) for t in taus]
    ws = []
    for t in taus:
        rel = t.stderr / t.mean if t.mean > 0 else 0.0
        ws.append(1.0 / max(rel**2, 1e-12))
    fit = weighted_line_fit(ks, ys, ws)
    if fit.slope <= 0.0:
        raise DegenerateFit(f"non-positive decay rate {fit.slope}; p may be supercritical")
    xi = 1.0 / fit.slope
    xi_err = fit.slope_stderr / fit.slope**2
    est = Estimate(xi, xi_err, n * n_points, max(t.censored_fraction for t in taus))
    return XiFit(est, fit, ks, taus)


@dataclass
class TildeChiResult:
    """Wrap-around two-point mass: sup over classes of the far-field tau sum."""

    estimate: Estimate
    arg_class: Vertex
    radius_max: float
    tail_bound: float
    implied_v23_constant: float
    n_targets: int
    xi: Estimate
    class_means: dict[Vertex, float] = field(repr=False, default_factory=dict)


def _far_targets(spec: TorusSpec, radius_max: float) -> dict[Vertex, int]:
    """Lattice points with r/2 <= sup-norm <= radius_max, keyed to class index."""
    R = int(math.floor(radius_max))
    half = spec.r / 2.0
    if (2 * R + 1) ** spec.d > 4_000_000:
        raise InvalidSpec(
            f"radius_max={radius_max} enumerates > 4e6 candidate sites at d={spec.d}"
        )
    verts = domain_vertices(spec)
    class_of = {v: i for i, v in enumerate(verts)}
    targets = {}
    for z in product(range(-R, R + 1), repeat=spec.d):
        norm = max(abs(c) for c in z)
        if half <= norm <= radius_max:
            targets[z] = class_of[canonical_class(z, spec)]
    return targets


def _exp_tail_bound(d: int, xi: float, radius: float) -> float:
    """Upper bound on sum over sup-norm > radius of exp(-|z|_sup / xi).

    Uses |z|_sup >= (|z_1|+...+|z_d|)/d and a union bound over which
    coordinate exceeds the radius, leaving products of geometric series.
    """
    a = math.exp(-1.0 / (d * xi))
    if a >= 1.0:
        return math.inf
    s_all = (1.0 + a) / (1.0 - a)
    s_tail = 2.0 * a ** math.floor(radius + 1.0) / (1.0 - a)
    return d * s_tail * s_all ** (d - 1)


def estimate_tilde_chi(
    spec: TorusSpec,
    p: float,
    n: int,
    cap: int,
    radius_max: float | None,
    seed: int,
    workers: int = 1,
    xi_points: int = 6,
) -> TildeChiResult:
    """Estimate sup_y sum of tau over lattice sites r-equivalent to y with
    sup-norm at least r/2, truncated at radius_max.

    The default truncation is r/2 + 8 * xi-hat, and the neglected tail is
    bounded by the fitted exponential decay and reported, not hidden. The
    result also carries the implied constant tilde-chi * V^(2/3).
    """
    _validate(spec, p, n)
    if p == 0.0:
        zero = Estimate(0.0, 0.0, n, 0.0)
        rmax = radius_max if radius_max is not None else spec.r / 2.0
        return TildeChiResult(zero, (0,) * spec.d, float(rmax), 0.0, 0.0, 0,
                              Estimate(0.0, 0.0, 0))
    xi_fit = estimate_xi(
        spec, p, xi_points, max(2, min(n, 20_000)), cap, seed + 7_000_003, workers
    )
    if radius_max is None:
        radius_max = spec.r / 2.0 + 8.0 * xi_fit.estimate.mean
    if radius_max < spec.r / 2.0:
        raise InvalidSpec(f"radius_max={radius_max} is below r/2={spec.r / 2}")
    targets = _far_targets(spec, radius_max)
    verts = domain_vertices(spec)
    if not targets:
        zero = Estimate(0.0, 0.0, n, 0.0)
        return TildeChiResult(zero, verts[0], radius_max, 0.0, 0.0, 0, xi_fit.estimate)
    acc = parallel.merge_all(
        parallel.run_blocks(
            _class_sum_block, n, (spec, p, seed, cap, targets, len(verts)), workers
        )
    )
    best = int(np.argmax(acc.mean))
    est = acc.component(best).to_estimate()
    tail = _exp_tail_bound(spec.d, xi_fit.estimate.mean, radius_max)
    return TildeChiResult(
        estimate=est,
        arg_class=verts[best],
        radius_max=float(radius_max),
        tail_bound=tail,
        implied_v23_constant=est.mean * spec.volume ** (2.0 / 3.0),
        n_targets=len(targets),
        xi=xi_fit.estimate,
        class_means={verts[i]: float(m) for i, m in enumerate(acc.mean)},
    )


@dataclass
class CmaxDistribution:
    """Maximal-cluster law summaries, raw and in units of V^(2/3)."""

    sizes: QuantileSummary
    scaled: QuantileSummary
    mean: Estimate
    chi: Estimate


def sample_decompositions(spec: TorusSpec, p: float, n: int, seed: int, workers: int = 1):
    """Shared decomposition sampler: (chi Estimate, cmax Estimate, cmax buffer)."""
    _validate(spec, p, n)
    _prewarm(spec, _use_table(spec))
    parts = parallel.run_blocks(_decomp_block, n, (spec, p, seed, True), workers)
    chi = parallel.merge_all([a for a, _, _ in parts]).to_estimate()
    cmean = parallel.merge_all([b for _, b, _ in parts]).to_estimate()
    buf = parts[0][2]
    for _, _, b in parts[1:]:
        buf = buf.merge(b)
    return chi, cmean, buf


def cmax_distribution(
    spec: TorusSpec, p: float, n: int, seed: int, workers: int = 1, probs=DEFAULT_PROBS
) -> CmaxDistribution:
    """Empirical quantiles of |C_max| and of |C_max| * V^(-2/3)."""
    chi, cmean, buf = sample_decompositions(spec, p, n, seed, workers)
    scale = spec.volume ** (-2.0 / 3.0)
    return CmaxDistribution(buf.summary(probs), buf.scaled(scale).summary(probs), cmean, chi)


def cluster_moment_bulk(
    spec: TorusSpec, x: Vertex, k: int, p: float, n: int, cap: int, seed: int,
    workers: int = 1,
) -> Estimate:
    """k-th moment of the bulk-boundary cluster of x restricted to the box.

    Exploration runs on Z^d, so connections may leave and re-enter the box.
    """
    _validate(spec, p, n)
    if k not in (1, 2, 3):
        raise InvalidSpec(f"moment order must be 1, 2, or 3, got {k}")
    if not spec.in_domain(x):
        raise InvalidSpec(f"{x} is outside the box of {spec}")
    parts = parallel.run_blocks(_moment_block, n, (spec, x, k, p, seed, cap), workers)
    return parallel.merge_all(parts).to_estimate()
