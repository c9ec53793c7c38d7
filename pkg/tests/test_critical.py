import math

import numpy as np
import pytest

from torusperc.errors import DegenerateFit, InfeasibleTarget, NonConvergence
from torusperc.lattice import TorusSpec
from torusperc import critical as crit
from torusperc import exact


def test_window_constant_value():
    assert crit.WINDOW_BOUND_CONSTANT == 288 * 120**3 == 497_664_000


def test_solve_edge_targets():
    spec = TorusSpec(1, 3)
    v13 = spec.volume ** (1.0 / 3.0)
    r0 = crit.solve_pc_torus(spec, crit.CriticalConfig(lam=1.0 / v13, tolerance=0.01,
                                                       n_per_eval=100, seed=1))
    assert r0.p_hat == 0.0 and r0.chi_at_p_hat.mean == 1.0
    r1 = crit.solve_pc_torus(spec, crit.CriticalConfig(lam=spec.volume / v13,
                                                       tolerance=0.01,
                                                       n_per_eval=100, seed=1))
    assert r1.p_hat == 1.0 and r1.chi_at_p_hat.mean == float(spec.volume)


def test_solve_infeasible():
    spec = TorusSpec(1, 3)
    with pytest.raises(InfeasibleTarget):
        crit.solve_pc_torus(spec, crit.CriticalConfig(lam=0.01, tolerance=0.01,
                                                      n_per_eval=100, seed=1))
    with pytest.raises(InfeasibleTarget):
        crit.solve_pc_torus(spec, crit.CriticalConfig(lam=100.0, tolerance=0.01,
                                                      n_per_eval=100, seed=1))


def test_solve_line_r3_root():
    # exact root of 1 + 2(p + p^2 - p^3) = 3^(1/3) is ~0.19155
    spec = TorusSpec(1, 3)
    cfg = crit.CriticalConfig(lam=1.0, tolerance=0.005, n_per_eval=400_000, seed=2)
    res = crit.solve_pc_torus(spec, cfg)
    assert abs(res.chi_at_p_hat.mean - res.target) <= cfg.tolerance
    assert abs(res.p_hat - 0.19155) < 0.02
    assert res.monotone_ok
    # independent-seed re-evaluation within 4 stderr of the target
    from torusperc.estimators import estimate_chi_torus

    check = estimate_chi_torus(spec, res.p_hat, 200_000, seed=777)
    assert abs(check.mean - res.target) < 4 * check.stderr + cfg.tolerance


def test_solve_deterministic_and_worker_independent():
    spec = TorusSpec(2, 3)
    cfg = crit.CriticalConfig(lam=0.5, tolerance=0.02, n_per_eval=5000, seed=3)
    a = crit.solve_pc_torus(spec, cfg)
    b = crit.solve_pc_torus(spec, cfg)
    assert a.p_hat == b.p_hat
    assert a.chi_at_p_hat.mean == b.chi_at_p_hat.mean
    cfg4 = crit.CriticalConfig(lam=0.5, tolerance=0.02, n_per_eval=5000, seed=3,
                               workers=4)
    c = crit.solve_pc_torus(spec, cfg4)
    assert c.p_hat == a.p_hat and c.chi_at_p_hat.mean == a.chi_at_p_hat.mean


def test_solve_nonconvergence_reports_bracket():
    spec = TorusSpec(1, 3)
    # with 3 replicates the empirical map has coarse steps; an absurd
    # tolerance cannot be met
    cfg = crit.CriticalConfig(lam=1.0, tolerance=1e-12, n_per_eval=3, seed=4)
    with pytest.raises(NonConvergence) as exc:
        crit.solve_pc_torus(spec, cfg)
    assert exc.value.bracket is not None
    lo, hi = exc.value.bracket
    assert 0.0 <= lo <= hi <= 1.0


def test_subcritical_bound_check_and_self_test():
    spec = TorusSpec(2, 3)
    lam = 1.0  # lam * V^(1/3) must reach 1; V = 9 here
    cfg = crit.CriticalConfig(lam=lam, tolerance=0.02, n_per_eval=30_000, seed=5)
    res = crit.solve_pc_torus(spec, cfg)
    pts = crit.subcritical_bound_check(spec, res.p_hat, [0.05, 0.1, 0.2], 30_000,
                                       seed=6, lam=lam)
    assert all(pt.crude_ok_3sigma for pt in pts)
    # the grid points agree with the enumeration oracle
    for pt in pts:
        chi_exact = exact.enumerate_measure(spec, pt.p).chi
        assert abs(pt.chi.mean - chi_exact) < 4 * pt.chi.stderr
    # deliberately wrong critical point: bracket violated at small q
    bad = crit.subcritical_bound_check(spec, min(res.p_hat + 0.2, 0.9),
                                       [0.05], 30_000, seed=7, lam=lam)
    assert not bad[0].bracket_ok_3sigma


def test_exponent_fit_examples():
    fit = crit.exponent_fit([(x, x * x) for x in (1.0, 2.0, 3.0, 5.0)])
    assert abs(fit.slope - 2.0) < 1e-12
    fit0 = crit.exponent_fit([(x, 7.0) for x in (1.0, 2.0, 4.0)])
    assert abs(fit0.slope) < 1e-12
    rng = np.random.default_rng(8)
    pts = [(x, x ** (2.0 / 3.0) * math.exp(rng.normal(0, 0.01))) for x in
           np.linspace(1, 20, 20)]
    noisy = crit.exponent_fit(pts)
    assert abs(noisy.slope - 2.0 / 3.0) < 0.02
    with pytest.raises(DegenerateFit):
        crit.exponent_fit([(1.0, 2.0), (1.0, 3.0), (1.0, 4.0)])


def test_gamma_fit_line_oracle():
    res = crit.gamma_fit(TorusSpec(1, 5), 1.0, [0.02, 0.01, 0.005], n=12_000,
                         cap=100_000, seed=9)
    assert abs(res.exponent.mean + 1.0) < 0.02
    # synthetic self-test: chi = 1/eps exactly gives slope -1
    from torusperc.fitting import loglog_fit

    f = loglog_fit([(e, 1.0 / e) for e in (0.5, 0.25, 0.125)])
    assert abs(f.slope + 1.0) < 1e-12
    # the coarse-grid closed form (2 - eps)/eps has slope -1.1611, not -1
    f2 = loglog_fit([(e, (2 - e) / e) for e in (0.5, 0.25, 0.125)])
    assert abs(f2.slope + 1.1611) < 1e-3


def test_pc_lattice_proxy_climbs_from_below():
    # d=1 has p_c = 1; the bracket iteration must approach it from below
    res = crit.estimate_pc_lattice_proxy(TorusSpec(1, 5), n=2000, cap=100_000,
                                         seed=12, min_step=0.01)
    assert res.converged
    assert res.p_ref < 1.0
    assert res.p_ref > 0.9
    ps = [p for p, _, _ in res.steps]
    assert ps == sorted(ps)


def test_window_experiment_p0_and_constants():
    # V = 25: the lower barrier exceeds 1 at omega1 = 1, so p = 0 never lands
    # in the window
    spec = TorusSpec(2, 5)
    recs = crit.window_experiment([spec], 0.0, 1.0, 1.0, n=200, seed=10)
    rec = recs[0]
    assert rec.lower_barrier > 1.0
    assert rec.empirical_window_prob == 0.0
    assert rec.reference_constant == 497_664_000
    assert rec.log_base == "natural"
    expected_term = 497_664_000 / (1.0 * math.log(25) ** 2)
    assert math.isclose(rec.reference_lower_term, expected_term, rel_tol=1e-12)


def test_window_probability_oracle():
    # exact law on the 3-cycle at p=0.5: window [2, 3] has probability 7/8
    spec = TorusSpec(1, 3)
    law = exact.enumerate_measure(spec, 0.5).cmax_law
    recs = crit.window_experiment([spec], 0.5, omega1=3.0, omega2=1.0, n=40_000,
                                  seed=11)
    rec = recs[0]
    inside = sum(q for s, q in law.items()
                 if rec.lower_barrier <= s <= rec.upper_barrier)
    se = math.sqrt(inside * (1 - inside) / rec.n)
    assert abs(rec.empirical_window_prob - inside) < 4 * se
