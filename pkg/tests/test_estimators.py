import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from torusperc.errors import DegenerateFit, InvalidSpec
from torusperc.lattice import TorusSpec
from torusperc import cluster as clu
from torusperc import estimators as est
from torusperc import exact
from torusperc import randomness as rnd


# ---------------------------------------------------------------------------
# Accumulators and merging.


@given(st.lists(st.floats(-1e6, 1e6), min_size=2, max_size=60), st.integers(1, 59))
@settings(max_examples=80, deadline=None)
def test_moment_merge_matches_unpartitioned(values, cut):
    cut = min(cut, len(values) - 1)
    whole = est.MomentAcc.from_values(values)
    merged = est.MomentAcc.from_values(values[:cut]).merge(
        est.MomentAcc.from_values(values[cut:]))
    assert merged.n == whole.n
    scale = max(abs(whole.mean), 1.0)
    assert abs(merged.mean - whole.mean) <= 1e-12 * scale
    assert abs(merged.m2 - whole.m2) <= 1e-9 * max(whole.m2, 1.0)


def test_estimate_merge_pools_exactly():
    a = est.MomentAcc.from_values([1.0, 2.0, 3.0]).to_estimate()
    b = est.MomentAcc.from_values([4.0, 5.0]).to_estimate()
    merged = a.merge(b)
    direct = est.MomentAcc.from_values([1.0, 2.0, 3.0, 4.0, 5.0]).to_estimate()
    assert merged.n == direct.n == 5
    assert math.isclose(merged.mean, direct.mean, rel_tol=1e-12)
    assert math.isclose(merged.stderr, direct.stderr, rel_tol=1e-9)


def test_constant_values_zero_stderr():
    acc = est.MomentAcc.from_values([7.5] * 1000)
    e = acc.to_estimate()
    assert e.stderr == 0.0
    e2 = acc.merge(est.MomentAcc.from_values([7.5] * 500)).to_estimate()
    assert e2.stderr == 0.0 and e2.mean == 7.5


def test_bivar_merge():
    rng = np.random.default_rng(0)
    xs, ys = rng.normal(size=100), rng.normal(size=100)
    whole = est.BivarAcc.from_values(xs, ys)
    merged = est.BivarAcc.from_values(xs[:37], ys[:37]).merge(
        est.BivarAcc.from_values(xs[37:], ys[37:]))
    assert math.isclose(whole.cxy, merged.cxy, rel_tol=1e-10)
    assert math.isclose(whole.ratio_estimate().mean, merged.ratio_estimate().mean,
                        rel_tol=1e-12)


def test_block_partition_invariance():
    # same replicates, different block sizes, merged in order: 1e-12 relative
    spec = TorusSpec(2, 3)
    values = []
    for sid in range(1000):
        s = clu.decompose_torus(spec, 0.4, rnd.RandomStream(5, sid))
        values.append(s.sum_sq_over_V)
    whole = est.MomentAcc.from_values(values).to_estimate()
    for block in (1, 7, 100, 999):
        acc = est.MomentAcc()
        for lo in range(0, 1000, block):
            acc = acc.merge(est.MomentAcc.from_values(values[lo:lo + block]))
        got = acc.to_estimate()
        assert abs(got.mean - whole.mean) <= 1e-12 * abs(whole.mean)
        assert abs(got.stderr - whole.stderr) <= 1e-9 * max(whole.stderr, 1e-30)


def test_worker_count_independence():
    spec = TorusSpec(2, 3)
    base = est.estimate_chi_torus(spec, 0.3, 2000, seed=9, workers=1)
    for workers in (2, 4):
        other = est.estimate_chi_torus(spec, 0.3, 2000, seed=9, workers=workers)
        assert other.mean == base.mean
        assert other.stderr == base.stderr
        assert other.n == base.n


# ---------------------------------------------------------------------------
# Estimator oracles.


def test_chi_torus_edges():
    spec = TorusSpec(2, 3)
    e0 = est.estimate_chi_torus(spec, 0.0, 100, seed=1)
    assert e0.mean == 1.0 and e0.stderr == 0.0
    e1 = est.estimate_chi_torus(spec, 1.0, 100, seed=1)
    assert e1.mean == float(spec.volume) and e1.stderr == 0.0


def test_chi_torus_table_vs_periter_paths():
    spec = TorusSpec(2, 3)  # 18 bonds: table path
    e_table = est.estimate_chi_torus(spec, 0.45, 500, seed=3)
    vals = [clu.decompose_torus(spec, 0.45, rnd.RandomStream(3, sid)).sum_sq_over_V
            for sid in range(500)]
    direct = est.MomentAcc.from_values(vals).to_estimate()
    # per-replicate values are bit-identical; the block merge may round
    # differently than one whole-array pass, within documented tolerance
    assert abs(e_table.mean - direct.mean) <= 1e-12 * abs(direct.mean)
    assert abs(e_table.stderr - direct.stderr) <= 1e-9 * direct.stderr


def test_chi_torus_oracle():
    spec = TorusSpec(1, 3)
    m = exact.enumerate_measure(spec, 0.5)
    e = est.estimate_chi_torus(spec, 0.5, 50_000, seed=11)
    assert abs(e.mean - m.chi) < 4 * e.stderr


def test_chi_lattice_line_closed_forms():
    spec = TorusSpec(1, 5)
    e0 = est.estimate_chi_lattice(spec, 0.0, 100, cap=10, seed=0)
    assert e0.mean == 1.0 and e0.censored_fraction == 0.0
    e = est.estimate_chi_lattice(spec, 0.5, 40_000, cap=10_000, seed=1)
    assert abs(e.mean - 3.0) < 3 * e.stderr
    e9 = est.estimate_chi_lattice(spec, 0.9, 10_000, cap=10_000, seed=2)
    assert abs(e9.mean - 19.0) < 3 * e9.stderr


def test_chi_lattice_censoring_flagged():
    spec = TorusSpec(2, 3)
    e = est.estimate_chi_lattice(spec, 1.0, 100, cap=50, seed=3)
    assert e.censored_fraction == 1.0
    assert e.mean == 50.0


def test_tau_exact_cases():
    spec = TorusSpec(2, 3)
    t0 = est.estimate_tau(clu.Torus(spec), (0, 0), 0.37, 100, cap=9, seed=4)
    assert t0.mean == 1.0 and t0.stderr == 0.0
    t1 = est.estimate_tau(clu.Lattice(spec), (1, 0), 0.0, 100, cap=9, seed=4)
    assert t1.mean == 0.0


def test_tau_oracle_torus():
    spec = TorusSpec(1, 3)
    m = exact.enumerate_measure(spec, 0.5)
    t = est.estimate_tau(clu.Torus(spec), (1,), 0.5, 50_000, cap=3, seed=5)
    assert abs(t.mean - m.tau[(1,)]) < 4 * t.stderr


def test_tau_symmetry():
    spec = TorusSpec(2, 3)
    a = est.estimate_tau(clu.Torus(spec), (1, 0), 0.4, 30_000, cap=9, seed=6)
    b = est.estimate_tau(clu.Torus(spec), (-1, 0), 0.4, 30_000, cap=9, seed=1006)
    pooled = math.hypot(a.stderr, b.stderr)
    assert abs(a.mean - b.mean) < 4 * pooled


def test_chi_monotone_in_p_common_random_numbers():
    spec = TorusSpec(2, 3)
    means = [est.estimate_chi_torus(spec, p, 2000, seed=7).mean
             for p in (0.1, 0.3, 0.5, 0.7, 0.9)]
    assert all(a <= b for a, b in zip(means, means[1:]))


def test_xi_line_closed_form():
    fit = est.estimate_xi(TorusSpec(1, 5), 0.5, n_points=6, n=50_000, cap=10_000,
                          seed=8)
    assert abs(fit.estimate.mean - 1 / math.log(2)) / (1 / math.log(2)) < 0.05


def test_xi_degenerate():
    with pytest.raises(DegenerateFit):
        est.estimate_xi(TorusSpec(1, 5), 0.05, n_points=9, n=50, cap=100, seed=9)


def test_fit_self_test_exact_exponential():
    from torusperc.fitting import weighted_line_fit

    xi_true = 1.7
    ks = [1, 2, 3, 4, 5]
    ys = [k / xi_true for k in ks]
    fit = weighted_line_fit(ks, ys)
    assert math.isclose(1.0 / fit.slope, xi_true, rel_tol=1e-12)
    assert fit.slope_stderr < 1e-12


def test_tilde_chi_p0_and_oracle():
    z = est.estimate_tilde_chi(TorusSpec(1, 4), 0.0, n=100, cap=10, radius_max=10,
                               seed=10)
    assert z.estimate.mean == 0.0
    res = est.estimate_tilde_chi(TorusSpec(1, 4), 0.5, n=50_000, cap=10_000,
                                 radius_max=40, seed=11)
    assert abs(res.estimate.mean - 8 / 15) < 3 * res.estimate.stderr
    assert res.arg_class == (-2,)
    res6 = est.estimate_tilde_chi(TorusSpec(1, 6), 0.5, n=30_000, cap=10_000,
                                  radius_max=40, seed=12)
    assert res6.estimate.mean < res.estimate.mean


def test_smoothness_chain_on_the_line():
    # when far-field tau ratios are bounded by C, the wrap-around mass is at
    # most (C/V) chi_Z; on the line tau(z) = p^|z| makes C computable
    p, r = 0.5, 4
    spec = TorusSpec(1, r)
    smooth_c = p ** (-(r // 2))  # max over |x| <= r/2 of tau(z)/tau(z+x)
    res = est.estimate_tilde_chi(spec, p, n=20_000, cap=10_000, radius_max=40,
                                 seed=20)
    chi_z = est.estimate_chi_lattice(spec, p, 20_000, cap=10_000, seed=21)
    bound = smooth_c / spec.volume * chi_z.mean
    slack = 3 * (res.estimate.stderr + smooth_c / spec.volume * chi_z.stderr)
    assert res.estimate.mean <= bound + slack


def test_cluster_moment_oracle():
    spec = TorusSpec(1, 3)
    e = est.cluster_moment_bulk(spec, (0,), 3, 0.5, 50_000, cap=10_000, seed=13)
    assert abs(e.mean - 11.0) < 3 * e.stderr
    e1 = est.cluster_moment_bulk(spec, (0,), 1, 0.0, 100, cap=10, seed=13)
    assert e1.mean == 1.0
    with pytest.raises(InvalidSpec):
        est.cluster_moment_bulk(spec, (0,), 4, 0.5, 100, cap=10, seed=13)


def test_cluster_moment_monotone_per_replicate():
    spec = TorusSpec(2, 4)
    for sid in range(200):
        stream = rnd.RandomStream(30, sid)
        prev = 0
        for p in (0.1, 0.3, 0.5):
            res = clu.explore_cluster(clu.Lattice(spec), (0, 0), p, stream, 10_000)
            inside = sum(1 for v in res.cluster if spec.in_domain(v))
            assert inside >= prev
            prev = inside


def test_cmax_distribution_edges():
    spec = TorusSpec(2, 3)
    d0 = est.cmax_distribution(spec, 0.0, 100, seed=14)
    assert all(q == 1 for q in d0.sizes.quantiles)
    d1 = est.cmax_distribution(spec, 1.0, 100, seed=14)
    assert all(q == spec.volume for q in d1.sizes.quantiles)
    assert list(d1.sizes.quantiles) == sorted(d1.sizes.quantiles)


def test_cmax_median_line_r3():
    # exact law {1: 1/8, 2: 3/8, 3: 1/2}: the upper median of the law is 3 and
    # the sample median sits on the 2/3 boundary
    m = exact.enumerate_measure(TorusSpec(1, 3), 0.5)
    cum = 0.0
    law_median = None
    for s in sorted(m.cmax_law):
        cum += m.cmax_law[s]
        if cum >= 0.5 and law_median is None:
            boundary = math.isclose(cum, 0.5, abs_tol=1e-12)
            law_median = s + 1 if boundary else s
    assert law_median == 3
    d = est.cmax_distribution(TorusSpec(1, 3), 0.5, 20_000, seed=15)
    medians = dict(zip(d.sizes.probs, d.sizes.quantiles))
    assert medians[0.5] in (2.0, 3.0)


def test_quantile_buffer_sketch_mode():
    buf = est.SampleBuffer()
    buf.EXACT_LIMIT = est.SampleBuffer.EXACT_LIMIT  # class default untouched
    rng = np.random.default_rng(1)
    data = rng.normal(size=5000)
    buf.add_array(data)
    exact_q = buf.quantile(0.9)
    sk = est.SampleBuffer()
    sk.add_array(data)
    sk._to_sketch()
    approx_q = sk.quantile(0.9)
    width = (sk.edges[-1] - sk.edges[0]) / sk.BINS
    assert abs(exact_q - approx_q) <= 2 * width
    merged = buf.merge(sk)
    assert merged.n == 10_000


def test_validation_errors():
    spec = TorusSpec(2, 3)
    with pytest.raises(InvalidSpec):
        est.estimate_chi_torus(spec, 1.5, 100, seed=0)
    with pytest.raises(InvalidSpec):
        est.estimate_chi_torus(spec, 0.5, 1, seed=0)
    with pytest.raises(InvalidSpec):
        est.estimate_chi_lattice(spec, 0.5, 100, cap=0, seed=0)
