"""Internal critical point and scaling experiments.

The finite-torus critical point is defined implicitly by chi_T(p) = lambda *
V^(1/3); it is solved by bisection against an empirical susceptibility map
built from one frozen replicate set, which common random numbers make
monotone in p, so the bisection is exact on the empirical function.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from .errors import InfeasibleTarget, InvalidSpec, NonConvergence
from .estimators import (
    Estimate,
    QuantileSummary,
    estimate_chi_lattice,
    estimate_chi_torus,
    sample_decompositions,
)
from .fitting import LineFit, loglog_fit, weighted_line_fit
from .lattice import TorusSpec

# Reference constant of the maximal-cluster window probability bound
# (the companion constant of the lower barrier is existence-only and the
# records say so instead of inventing a number).
WINDOW_BOUND_CONSTANT = 288 * 120**3


@dataclass
class CriticalConfig:
    """Knobs of the internal-critical-point solve.

    volume_exponent is exposed for exploration; 1/3 is the supported value
    and anything else is labelled as such in outputs.
    """

    lam: float = 0.1
    tolerance: float = 0.05
    n_per_eval: int = 2000
    seed: int = 0
    volume_exponent: float = 1.0 / 3.0
    workers: int = 1
    max_iterations: int = 80


@dataclass
class PcSolveResult:
    p_hat: float
    chi_at_p_hat: Estimate
    target: float
    iterations: int
    visited: list = field(repr=False, default_factory=list)
    monotone_ok: bool = True
    converged: bool = True


def solve_pc_torus(spec: TorusSpec, config: CriticalConfig) -> PcSolveResult:
    """Bisect p until the empirical susceptibility hits lambda * V^exponent.

    The replicate set (seed, n_per_eval) is frozen across evaluations, so the
    empirical map is non-decreasing in p (verified on the visited points) and
    the solve is deterministic bit-for-bit. Raises InfeasibleTarget when the
    target lies outside [1, V] and NonConvergence when the bracket collapses
    below 1e-10 without meeting the tolerance.
    """
    volume = spec.volume
    target = config.lam * volume**config.volume_exponent
    if target < 1.0:
        raise InfeasibleTarget(
            f"target chi {target:.6g} < 1; susceptibility is at least 1"
        )
    if target > volume:
        raise InfeasibleTarget(f"target chi {target:.6g} exceeds the volume {volume}")
    tol = config.tolerance
    if tol <= 0:
        raise InvalidSpec(f"tolerance must be positive, got {tol}")

    def evaluate(p: float) -> Estimate:
        return estimate_chi_torus(spec, p, config.n_per_eval, config.seed,
                                  workers=config.workers)

    if target <= 1.0 + tol:
        return PcSolveResult(0.0, Estimate(1.0, 0.0, config.n_per_eval), target, 0)
    if target >= volume - tol:
        return PcSolveResult(1.0, Estimate(float(volume), 0.0, config.n_per_eval), target, 0)

    lo_p, hi_p = 0.0, 1.0
    visited: list[tuple[float, float]] = []
    iterations = 0
    while hi_p - lo_p > 1e-10 and iterations < config.max_iterations:
        mid = 0.5 * (lo_p + hi_p)
        est = evaluate(mid)
        visited.append((mid, est.mean))
        iterations += 1
        if abs(est.mean - target) <= tol:
            ordered = sorted(visited)
            monotone = all(
                ordered[i][1] <= ordered[i + 1][1] + 1e-12 for i in range(len(ordered) - 1)
            )
            return PcSolveResult(mid, est, target, iterations, visited, monotone, True)
        if est.mean < target:
            lo_p = mid
        else:
            hi_p = mid
    raise NonConvergence(
        f"bracket [{lo_p}, {hi_p}] exhausted after {iterations} evaluations "
        f"without |chi - {target:.6g}| <= {tol}",
        bracket=(lo_p, hi_p),
        achieved=visited[-1][1] if visited else None,
    )


@dataclass
class SubcriticalPoint:
    """One grid point of the below-threshold susceptibility bound check."""

    q: float
    p: float
    chi: Estimate
    crude_bound: float
    crude_ok_3sigma: bool
    bracket_lower: float
    bracket_upper: float
    bracket_ok_3sigma: bool


def subcritical_bound_check(
    spec: TorusSpec,
    p_c_hat: float,
    q_grid: list[float],
    n: int,
    seed: int,
    lam: float = 0.1,
    workers: int = 1,
) -> list[SubcriticalPoint]:
    """Evaluate chi_T(p_c_hat - q/degree) against 2/q and the two-sided
    window bracket, with 3 standard errors of slack."""
    omega = spec.degree
    out = []
    inv_lam_v = (1.0 / lam) * spec.volume ** (-1.0 / 3.0)
    for q in q_grid:
        if q <= 0:
            raise InvalidSpec(f"q must be positive, got {q}")
        p = p_c_hat - q / omega
        if p < 0:
            raise InvalidSpec(f"q={q} drives p below zero (p_c_hat={p_c_hat})")
        est = estimate_chi_torus(spec, p, n, seed, workers=workers)
        crude = 2.0 / q
        lower = 1.0 / (inv_lam_v + q)
        upper = 1.0 / (inv_lam_v + q / 2.0)
        slack = 3.0 * est.stderr
        out.append(
            SubcriticalPoint(
                q=q,
                p=p,
                chi=est,
                crude_bound=crude,
                crude_ok_3sigma=est.mean <= crude + slack,
                bracket_lower=lower,
                bracket_upper=upper,
                bracket_ok_3sigma=(est.mean >= lower - slack) and (est.mean <= upper + slack),
            )
        )
    return out


@dataclass
class PcProxyResult:
    """Internally estimated stand-in for the lattice critical point."""

    p_ref: float
    steps: list  # (p, chi Estimate, step) per iteration
    converged: bool


def estimate_pc_lattice_proxy(
    spec: TorusSpec,
    n: int,
    cap: int,
    seed: int,
    min_step: float = 3e-4,
    max_iters: int = 12,
    workers: int = 1,
) -> PcProxyResult:
    """Approach the lattice critical point from below via the divergence
    bracket: chi_Z(p) >= 1/(degree * (p_c - p)) gives p_c >= p + 1/(degree *
    chi_Z(p)), so iterating that step climbs toward p_c while staying under
    it (up to Monte Carlo noise). Stops once the step falls below min_step;
    the final p_ref then sits within about min_step of the threshold.
    """
    omega = spec.degree
    p = 0.0
    steps = []
    for k in range(max_iters):
        chi = estimate_chi_lattice(spec, p, n, cap, seed + k, workers=workers)
        step = 1.0 / (omega * chi.mean)
        steps.append((p, chi, step))
        p += step
        if step <= min_step:
            return PcProxyResult(p, steps, True)
    return PcProxyResult(p, steps, False)


@dataclass
class GammaFitResult:
    """Log-log slope of the subcritical susceptibility divergence."""

    exponent: Estimate
    fit: LineFit
    points: list  # (eps, chi Estimate)
    implied_lower_constants: list
    implied_upper_constant: float


def gamma_fit(
    spec_large: TorusSpec,
    p_c_ref: float,
    eps_grid: list[float],
    n: int,
    cap: int,
    seed: int,
    workers: int = 1,
) -> GammaFitResult:
    """Fit log chi_Z(p_c_ref - eps) against log eps.

    A slope of -1 is the mean-field prediction. Also records the implied
    constants chi * degree * eps per point (the divergence bracket holds when
    these sit in [1, C]).
    """
    if any(e <= 0 for e in eps_grid):
        raise InvalidSpec("eps grid must be strictly positive")
    if p_c_ref - max(eps_grid) < 0:
        raise InvalidSpec("largest eps drives p below zero")
    pts = []
    ests = []
    for j, eps in enumerate(sorted(eps_grid, reverse=True)):
        est = estimate_chi_lattice(spec_large, p_c_ref - eps, n, cap, seed + j, workers=workers)
        ests.append((eps, est))
        rel = est.stderr / est.mean if est.mean > 0 else 1.0
        pts.append((eps, est.mean, 1.0 / max(rel**2, 1e-12)))
    fit = loglog_fit(pts)
    implied = [e.mean * spec_large.degree * eps for eps, e in ests]
    return GammaFitResult(
        exponent=Estimate(fit.slope, fit.slope_stderr, len(eps_grid)),
        fit=fit,
        points=ests,
        implied_lower_constants=implied,
        implied_upper_constant=max(implied),
    )


@dataclass
class WindowRecord:
    """Maximal-cluster window statistics of one spec at one p."""

    spec: TorusSpec
    p: float
    chi_hat: Estimate
    cmax_mean: Estimate
    cmax_quantiles: QuantileSummary
    cmax_scaled_quantiles: QuantileSummary
    omega1: float
    omega2: float
    lower_barrier: float
    upper_barrier: float
    empirical_window_prob: float
    empirical_window_stderr: float
    reference_constant: int
    reference_lower_term: float
    n: int
    log_base: str = "natural"


def window_experiment(
    spec_list: list[TorusSpec],
    p_eval: float,
    omega1: float,
    omega2: float,
    n: int,
    seed: int,
    workers: int = 1,
) -> list[WindowRecord]:
    """Sample |C_max| at p_eval and record how often it falls inside
    [V^(2/3) (log V)^(-4/3) / omega1, omega2 V^(2/3)].

    The reference term b/(omega1^(3/2) (log V)^2) with b = 288 * 120^3 is
    emitted for comparison (its companion upper-tail constant is
    existence-only and therefore omitted). Logs are natural.
    """
    if omega1 < 1 or omega2 < 1:
        raise InvalidSpec("omega1 and omega2 must be >= 1")
    records = []
    for spec in spec_list:
        volume = spec.volume
        chi, cmean, buf = sample_decompositions(spec, p_eval, n, seed, workers)
        lower = volume ** (2.0 / 3.0) * math.log(volume) ** (-4.0 / 3.0) / omega1
        upper = omega2 * volume ** (2.0 / 3.0)
        if buf.edges is None:
            inside = int(((buf.values >= lower) & (buf.values <= upper)).sum())
        else:  # histogram fallback; bin midpoints stand in for samples
            mids = (buf.edges[:-1] + buf.edges[1:]) / 2.0
            inside = int(buf.counts[(mids >= lower) & (mids <= upper)].sum())
        prob = inside / n
        ref_term = WINDOW_BOUND_CONSTANT / (omega1**1.5 * math.log(volume) ** 2)
        scale = volume ** (-2.0 / 3.0)
        records.append(
            WindowRecord(
                spec=spec,
                p=p_eval,
                chi_hat=chi,
                cmax_mean=cmean,
                cmax_quantiles=buf.summary(),
                cmax_scaled_quantiles=buf.scaled(scale).summary(),
                omega1=omega1,
                omega2=omega2,
                lower_barrier=lower,
                upper_barrier=upper,
                empirical_window_prob=prob,
                empirical_window_stderr=math.sqrt(max(prob * (1 - prob), 1e-300) / n),
                reference_constant=WINDOW_BOUND_CONSTANT,
                reference_lower_term=ref_term,
                n=n,
            )
        )
    return records


def exponent_fit(points) -> LineFit:
    """Weighted log-log regression; exact on synthetic power laws.

    points: iterable of (x, y) or (x, y, weight) with positive x and y.
    """
    return loglog_fit(points)


__all__ = [
    "CriticalConfig",
    "PcSolveResult",
    "solve_pc_torus",
    "SubcriticalPoint",
    "subcritical_bound_check",
    "GammaFitResult",
    "gamma_fit",
    "WindowRecord",
    "window_experiment",
    "exponent_fit",
    "WINDOW_BOUND_CONSTANT",
    "weighted_line_fit",
]
