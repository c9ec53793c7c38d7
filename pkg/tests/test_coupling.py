import collections

import numpy as np
import pytest
from scipy import stats

from torusperc.errors import InvalidSpec
from torusperc.lattice import TorusSpec, bond_equiv, canonical_class
from torusperc import cluster as clu
from torusperc import coupling as cpl
from torusperc import exact
from torusperc import randomness as rnd


def test_p0_and_p1_edges():
    spec = TorusSpec(2, 3)
    r0 = cpl.coupled_explore(spec, 0.0, rnd.RandomStream(0, 0), cap=100)
    assert r0.torus_cluster == {(0, 0)}
    assert r0.lattice_cluster == {(0, 0)}
    assert not any(c == cpl.BLACK for c in r0.ledger.lattice_colors.values())
    assert not r0.censored

    s1 = TorusSpec(1, 3)
    r1 = cpl.coupled_explore(s1, 1.0, rnd.RandomStream(0, 0), cap=100)
    assert r1.torus_cluster == {(-1,), (0,), (1,)}
    assert r1.censored  # the lattice cluster is infinite, truncated at cap
    assert len(r1.lattice_cluster) >= 100


def test_invalid_args():
    with pytest.raises(InvalidSpec):
        cpl.coupled_explore(TorusSpec(1, 3), 0.5, rnd.RandomStream(0, 0), cap=0)
    with pytest.raises(InvalidSpec):
        cpl.coupled_explore(TorusSpec(1, 3), 1.0001, rnd.RandomStream(0, 0), cap=5)


@pytest.mark.parametrize(
    "spec,p",
    [(TorusSpec(1, 3), 0.5), (TorusSpec(2, 3), 0.3), (TorusSpec(2, 4), 0.35),
     (TorusSpec(1, 5, "spread", L=2), 0.2)],
)
def test_invariants_hold(spec, p):
    for sid in range(1500):
        res = cpl.coupled_explore(spec, p, rnd.RandomStream(101, sid), cap=100_000)
        assert cpl.verify_coupling_invariants(res) == []
        assert cpl.stage1_black_subset_stage2(res)
        if not res.censored:
            assert len(res.torus_cluster) <= len(res.lattice_cluster)


def test_gray_bookkeeping_no_two_explored_equivalent():
    spec = TorusSpec(2, 3)
    for sid in range(300):
        res = cpl.coupled_explore(spec, 0.5, rnd.RandomStream(7, sid), cap=100_000)
        explored = [b for b, c in res.ledger.lattice_colors.items() if c != cpl.GRAY]
        for i in range(len(explored)):
            for j in range(i + 1, len(explored)):
                assert not bond_equiv(explored[i], explored[j], spec)
        # gray iff an equivalent bond was explored
        for b, c in res.ledger.lattice_colors.items():
            if c == cpl.GRAY:
                assert any(bond_equiv(b, e, spec) for e in explored)


def test_torus_marginal_matches_exact_law():
    spec = TorusSpec(2, 3)
    p = 0.3
    n = 20_000
    hist = collections.Counter()
    for sid in range(n):
        res = cpl.coupled_explore(spec, p, rnd.RandomStream(55, sid), cap=100_000)
        hist[len(res.torus_cluster)] += 1
    law = exact.enumerate_measure(spec, p).cluster0_law
    sizes = sorted(law)
    from torusperc.estimators import pool_bins

    observed, expected = pool_bins([hist.get(s, 0) for s in sizes],
                                   [law[s] * n for s in sizes])
    chi2 = ((observed - expected) ** 2 / expected).sum()
    assert stats.chi2.sf(chi2, len(observed) - 1) >= 1e-3


def test_lattice_marginal_matches_direct_exploration():
    spec = TorusSpec(2, 3)
    p, cap, n = 0.3, 64, 15_000
    coupled = collections.Counter()
    direct = collections.Counter()
    for sid in range(n):
        res = cpl.coupled_explore(spec, p, rnd.RandomStream(66, sid), cap=cap)
        coupled[min(len(res.lattice_cluster), cap)] += 1
        ref = clu.explore_cluster(clu.Lattice(spec), (0, 0), p,
                                  rnd.RandomStream(766, sid), cap)
        direct[min(len(ref.cluster), cap)] += 1
    sizes = sorted(set(coupled) | set(direct))
    a = np.array([coupled.get(s, 0) for s in sizes], dtype=float)
    b = np.array([direct.get(s, 0) for s in sizes], dtype=float)
    pooled = a + b
    keep = pooled >= 10
    a = np.append(a[keep], a[~keep].sum())
    b = np.append(b[keep], b[~keep].sum())
    table = np.vstack([a, b])
    chi2, p_value, _, _ = stats.chi2_contingency(table)
    assert p_value >= 1e-3, p_value


def test_checker_flags_synthetic_violations():
    spec = TorusSpec(2, 3)
    good = cpl.coupled_explore(spec, 0.3, rnd.RandomStream(1, 2), cap=1000)
    # (b): a torus class with no representative in the lattice cluster
    bad_b = cpl.CoupledResult(
        spec=spec,
        torus_cluster=good.torus_cluster | {(1, 1)},
        lattice_cluster={v for v in good.lattice_cluster
                         if canonical_class(v, spec) != (1, 1)},
        ledger=good.ledger,
        censored=False,
        stage2_black_with_white_rep=good.stage2_black_with_white_rep,
    )
    msgs = cpl.verify_coupling_invariants(bad_b)
    assert any("(b)" in m for m in msgs)
    # (c): lattice-only class but no black bond with a white representative
    bad_c = cpl.CoupledResult(
        spec=spec,
        torus_cluster={(0, 0)},
        lattice_cluster={(0, 0), (1, 0)},
        ledger=good.ledger,
        censored=False,
        stage2_black_with_white_rep=0,
    )
    msgs = cpl.verify_coupling_invariants(bad_c)
    assert any("(c)" in m for m in msgs)
    # (a): torus bigger than lattice
    bad_a = cpl.CoupledResult(
        spec=spec,
        torus_cluster={(0, 0), (1, 0), (0, 1)},
        lattice_cluster={(0, 0)},
        ledger=good.ledger,
        censored=False,
        stage2_black_with_white_rep=1,
    )
    msgs = cpl.verify_coupling_invariants(bad_a)
    assert any("(a)" in m for m in msgs)


def test_trace_stream():
    spec = TorusSpec(2, 3)
    events = []
    res = cpl.coupled_explore(spec, 0.4, rnd.RandomStream(9, 9), cap=10_000,
                              trace=events.append)
    stage1 = [e for e in events if e["stage"] == 1]
    assert len(stage1) == len(res.ledger.lattice_colors)
    colors = collections.Counter(e["color"] for e in stage1)
    ledger_colors = collections.Counter(
        cpl.COLOR_NAMES[c] for c in res.ledger.lattice_colors.values())
    assert colors == ledger_colors
    # replay: stage-1 black/white events must be class-unique
    seen_classes = set()
    for e in stage1:
        if e["color"] == "gray":
            continue
        bond = (tuple(e["bond"][0]), tuple(e["bond"][1]))
        from torusperc.lattice import bond_canonical

        cb = bond_canonical(bond, spec)
        assert cb not in seen_classes
        seen_classes.add(cb)


def test_mean_torus_cluster_matches_chi():
    spec = TorusSpec(1, 4)
    p = 0.45
    n = 25_000
    total = 0
    for sid in range(n):
        res = cpl.coupled_explore(spec, p, rnd.RandomStream(77, sid), cap=100_000)
        total += len(res.torus_cluster)
    chi = exact.enumerate_measure(spec, p).chi
    mean = total / n
    # |C_T(0)| has mean chi; allow 4 sigma with a crude variance bound
    assert abs(mean - chi) < 0.05, (mean, chi)
