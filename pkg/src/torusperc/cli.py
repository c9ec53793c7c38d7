"""Experiment runner.

Subcommands cover every estimator and experiment; parameters come from a
single JSON config document and/or command-line flags, flags winning. The
seed resolves as --seed, then the config, then the PERC_SEED environment
variable, then 0. Records stream as JSON-Lines to --out or stdout. Exit
codes: 0 success, 2 validation error, 3 non-convergence or a too-large
enumeration request.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
import time

from .errors import (
    DegenerateFit,
    EmptyConditioning,
    InfeasibleTarget,
    InvalidSpec,
    NonConvergence,
    TooLarge,
)
from .lattice import NEAREST_NEIGHBOR, SPREAD_OUT, TorusSpec, canonical_class
from . import baseline, boundary, coupling, critical, estimators, exact, records
from . import cluster as clu
from . import randomness as rnd


class ValidationError(Exception):
    def __init__(self, problems):
        super().__init__("; ".join(problems))
        self.problems = problems


def _parse_int_list(text: str) -> list[int]:
    return [int(tok) for tok in str(text).split(",") if tok != ""]


def _parse_float_list(text: str) -> list[float]:
    return [float(tok) for tok in str(text).split(",") if tok != ""]


def _parse_vertex(text: str) -> tuple[int, ...]:
    return tuple(int(tok) for tok in str(text).split(",") if tok != "")


def build_parser() -> argparse.ArgumentParser:
    top = argparse.ArgumentParser(
        prog="torusperc", description="Torus bond-percolation experiments"
    )
    sub = top.add_subparsers(dest="command", required=True)

    def common(p: argparse.ArgumentParser, spec=True, needs_p=True, needs_n=True, cap=False):
        p.add_argument("--config", help="JSON config document; flags override")
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--out", help="output path (JSON-Lines); default stdout")
        p.add_argument("--workers", type=int, default=None)
        if spec:
            p.add_argument("--d", type=int, default=None)
            p.add_argument("--r", type=int, default=None)
            p.add_argument("--model", choices=[NEAREST_NEIGHBOR, SPREAD_OUT], default=None)
            p.add_argument("--L", type=int, default=None)
        if needs_p:
            p.add_argument("--p", type=float, default=None)
        if needs_n:
            p.add_argument("--n", type=int, default=None)
        if cap:
            p.add_argument("--cap", type=int, default=None)

    pe = sub.add_parser("exact", help="exact enumeration measure")
    common(pe, needs_n=False)

    pc_ = sub.add_parser("chi", help="susceptibility estimate")
    common(pc_, cap=True)
    pc_.add_argument("--graph", choices=["torus", "lattice"], default=None)

    pt = sub.add_parser("tau", help="two-point function estimate")
    common(pt, cap=True)
    pt.add_argument("--graph", choices=["torus", "lattice"], default=None)
    pt.add_argument("--x", default=None, help="target vertex, comma separated")

    px = sub.add_parser("xi", help="correlation length fit")
    common(px, cap=True)
    px.add_argument("--n-points", type=int, default=None)

    ptc = sub.add_parser("tildechi", help="wrap-around two-point mass")
    common(ptc, cap=True)
    ptc.add_argument("--radius-max", type=float, default=None)

    pm = sub.add_parser("cmax", help="maximal-cluster quantiles")
    common(pm)

    pp = sub.add_parser("pc", help="internal critical point solve")
    common(pp, needs_p=False, needs_n=False)
    pp.add_argument("--lambda", dest="lam", type=float, default=None)
    pp.add_argument("--tolerance", type=float, default=None)
    pp.add_argument("--n-per-eval", type=int, default=None)
    pp.add_argument("--exponent", type=float, default=None)

    pw = sub.add_parser("window", help="maximal-cluster window experiment")
    common(pw)
    pw.add_argument("--omega1", type=float, default=None)
    pw.add_argument("--omega2", type=float, default=None)

    pg = sub.add_parser("gamma", help="susceptibility divergence exponent")
    common(pg, needs_p=False, cap=True)
    pg.add_argument("--pc-ref", type=float, default=None)
    pg.add_argument("--eps", default=None, help="comma separated epsilon grid")

    pcc = sub.add_parser("coupling-check", help="coupled exploration diagnostics")
    common(pcc, cap=True)
    pcc.add_argument("--trace", default=None, help="JSON-Lines bond trace path")

    pi = sub.add_parser("ineq", help="FKG/BK/tree-graph/susceptibility inequality suite")
    common(pi, cap=True)
    pi.add_argument("--which", default=None,
                    help="comma separated subset of fkg,bk,tree,lemma51")
    pi.add_argument("--radius-max", type=float, default=None)

    per = sub.add_parser("er", help="Erdos-Renyi largest-component baseline")
    per.add_argument("--config", help="JSON config document; flags override")
    per.add_argument("--seed", type=int, default=None)
    per.add_argument("--out", default=None)
    per.add_argument("--workers", type=int, default=None)
    per.add_argument("--n", default=None, help="comma separated vertex counts")
    per.add_argument("--eps", type=float, default=None)
    per.add_argument("--samples", type=int, default=None)

    pb = sub.add_parser("boundary", help="boundary-condition experiments")
    common(pb, cap=True)
    pb.add_argument("--bc", choices=["periodic", "free", "bulk"], default=None)
    pb.add_argument("--op", choices=["fourpoint", "thirdmoment", "longpath"], default=None)
    pb.add_argument("--method", choices=["analytic-points", "sampled"], default=None)
    pb.add_argument("--eps", default=None, help="epsilon grid for longpath")
    pb.add_argument("--r-list", default=None, help="box widths for thirdmoment")

    pr = sub.add_parser("report", help="summarize records into CSV and plot data")
    pr.add_argument("--records", required=True)
    pr.add_argument("--out-prefix", default="report")

    return top


def _merge_config(args: argparse.Namespace) -> dict:
    """Config document values fill in flags the user did not pass."""
    opts = vars(args).copy()
    path = opts.pop("config", None)
    if path:
        try:
            with open(path) as fh:
                doc = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ValidationError([f"config: cannot read {path}: {exc}"])
        if not isinstance(doc, dict):
            raise ValidationError(["config: top level must be a JSON object"])
        for key, value in doc.items():
            k = key.replace("-", "_")
            if k == "command":
                continue
            if opts.get(k) is None:
                opts[k] = value
    if opts.get("seed") is None:
        env = os.environ.get("PERC_SEED")
        opts["seed"] = int(env) if env else 0
    if opts.get("workers") is None:
        opts["workers"] = 1
    return opts


def _need(opts: dict, key: str, problems: list, kind=None, cond=None, msg=""):
    value = opts.get(key)
    if value is None:
        problems.append(f"{key}: required")
        return None
    if kind is not None:
        try:
            value = kind(value)
        except (TypeError, ValueError):
            problems.append(f"{key}: cannot parse {value!r}")
            return None
    if cond is not None and not cond(value):
        problems.append(f"{key}: {msg} (got {value!r})")
        return None
    opts[key] = value
    return value


def _spec_from(opts: dict, problems: list) -> TorusSpec | None:
    d = _need(opts, "d", problems, int, lambda v: v >= 1, "must be >= 1")
    r = _need(opts, "r", problems, int, lambda v: v >= 1, "must be >= 1")
    model = opts.get("model") or NEAREST_NEIGHBOR
    L = opts.get("L")
    if d is None or r is None:
        return None
    try:
        return TorusSpec(d=d, r=r, model=model, L=L)
    except InvalidSpec as exc:
        problems.append(f"spec: {exc}")
        return None


def _probability(opts: dict, problems: list, key: str = "p"):
    return _need(opts, key, problems, float, lambda v: 0.0 <= v <= 1.0,
                 "must be in [0,1]")


# ---------------------------------------------------------------------------
# Executors: one per subcommand, returning a list of result dicts.


def _run_exact(opts, problems):
    spec = _spec_from(opts, problems)
    p = _probability(opts, problems)
    if problems:
        raise ValidationError(problems)
    measure = exact.enumerate_measure(spec, p)
    results = {
        "chi": measure.chi,
        "e_cmax": measure.e_cmax,
        "cmax_law": measure.cmax_law,
        "cluster0_law": measure.cluster0_law,
        "tau": measure.tau,
        "exact": True,
    }
    return spec, {"p": p}, results, None


def _run_chi(opts, problems):
    spec = _spec_from(opts, problems)
    p = _probability(opts, problems)
    n = _need(opts, "n", problems, int, lambda v: v >= 2, "must be >= 2")
    graph = opts.get("graph") or "torus"
    cap = opts.get("cap")
    if graph == "lattice" and cap is None:
        problems.append("cap: required for the lattice graph")
    if problems:
        raise ValidationError(problems)
    if graph == "torus":
        est = estimators.estimate_chi_torus(spec, p, n, opts["seed"], opts["workers"])
    else:
        est = estimators.estimate_chi_lattice(spec, p, n, int(cap), opts["seed"],
                                              opts["workers"])
    censored = {"chi": est.censored_fraction} if est.censored_fraction else None
    return spec, {"p": p, "n": n, "graph": graph, "cap": cap}, {"chi": est}, censored


def _run_tau(opts, problems):
    spec = _spec_from(opts, problems)
    p = _probability(opts, problems)
    n = _need(opts, "n", problems, int, lambda v: v >= 2, "must be >= 2")
    x_raw = _need(opts, "x", problems)
    graph_kind = opts.get("graph") or "torus"
    cap = opts.get("cap")
    if graph_kind == "lattice" and cap is None:
        problems.append("cap: required for the lattice graph")
    if problems:
        raise ValidationError(problems)
    x = _parse_vertex(x_raw)
    if len(x) != spec.d:
        raise ValidationError([f"x: arity {len(x)} != d={spec.d}"])
    graph = clu.Torus(spec) if graph_kind == "torus" else clu.Lattice(spec)
    est = estimators.estimate_tau(graph, x, p, n, int(cap or spec.volume), opts["seed"],
                                  opts["workers"])
    return spec, {"p": p, "n": n, "x": list(x), "graph": graph_kind, "cap": cap}, \
        {"tau": est}, None


def _run_xi(opts, problems):
    spec = _spec_from(opts, problems)
    p = _probability(opts, problems)
    n = _need(opts, "n", problems, int, lambda v: v >= 2, "must be >= 2")
    cap = _need(opts, "cap", problems, int, lambda v: v >= 1, "must be >= 1")
    n_points = opts.get("n_points") or 6
    if problems:
        raise ValidationError(problems)
    fit = estimators.estimate_xi(spec, p, int(n_points), n, cap, opts["seed"],
                                 opts["workers"])
    results = {
        "xi": fit.estimate,
        "decay_rate": fit.slope_fit.slope,
        "decay_rate_stderr": fit.slope_fit.slope_stderr,
        "distances": fit.distances,
        "tau_values": fit.tau_values,
    }
    return spec, {"p": p, "n": n, "cap": cap, "n_points": n_points}, results, None


def _run_tildechi(opts, problems):
    spec = _spec_from(opts, problems)
    p = _probability(opts, problems)
    n = _need(opts, "n", problems, int, lambda v: v >= 2, "must be >= 2")
    cap = _need(opts, "cap", problems, int, lambda v: v >= 1, "must be >= 1")
    if problems:
        raise ValidationError(problems)
    res = estimators.estimate_tilde_chi(spec, p, n, cap, opts.get("radius_max"),
                                        opts["seed"], opts["workers"])
    results = {
        "tilde_chi": res.estimate,
        "arg_class": list(res.arg_class),
        "radius_max": res.radius_max,
        "tail_bound": res.tail_bound,
        "implied_v23_constant": res.implied_v23_constant,
        "n_targets": res.n_targets,
        "xi": res.xi,
    }
    censored = ({"tilde_chi": res.estimate.censored_fraction}
                if res.estimate.censored_fraction else None)
    return spec, {"p": p, "n": n, "cap": cap}, results, censored


def _run_cmax(opts, problems):
    spec = _spec_from(opts, problems)
    p = _probability(opts, problems)
    n = _need(opts, "n", problems, int, lambda v: v >= 2, "must be >= 2")
    if problems:
        raise ValidationError(problems)
    dist = estimators.cmax_distribution(spec, p, n, opts["seed"], opts["workers"])
    results = {"sizes": dist.sizes, "scaled": dist.scaled, "mean": dist.mean,
               "chi": dist.chi}
    return spec, {"p": p, "n": n}, results, None


def _run_pc(opts, problems):
    spec = _spec_from(opts, problems)
    lam = opts.get("lam") if opts.get("lam") is not None else 0.1
    tolerance = opts.get("tolerance") if opts.get("tolerance") is not None else 0.05
    n_per_eval = opts.get("n_per_eval") or 2000
    exponent = opts.get("exponent") if opts.get("exponent") is not None else 1.0 / 3.0
    if problems:
        raise ValidationError(problems)
    config = critical.CriticalConfig(
        lam=float(lam), tolerance=float(tolerance), n_per_eval=int(n_per_eval),
        seed=opts["seed"], volume_exponent=float(exponent), workers=opts["workers"],
    )
    res = critical.solve_pc_torus(spec, config)
    results = {
        "p_hat": res.p_hat,
        "chi_at_p_hat": res.chi_at_p_hat,
        "target": res.target,
        "iterations": res.iterations,
        "monotone_ok": res.monotone_ok,
        "lambda": config.lam,
        "lambda_is_operator_choice": True,
        "volume_exponent": config.volume_exponent,
    }
    params = {"lambda": config.lam, "tolerance": config.tolerance,
              "n_per_eval": config.n_per_eval, "volume_exponent": config.volume_exponent}
    return spec, params, results, None


def _run_window(opts, problems):
    specs = []
    if isinstance(opts.get("specs"), list):
        for i, sd in enumerate(opts["specs"]):
            try:
                specs.append(TorusSpec.from_dict(sd))
            except (InvalidSpec, KeyError, TypeError) as exc:
                problems.append(f"specs[{i}]: {exc}")
    else:
        spec = _spec_from(opts, problems)
        if spec:
            specs = [spec]
    p = _probability(opts, problems)
    n = _need(opts, "n", problems, int, lambda v: v >= 2, "must be >= 2")
    omega1 = opts.get("omega1") if opts.get("omega1") is not None else 10.0
    omega2 = opts.get("omega2") if opts.get("omega2") is not None else 10.0
    if problems:
        raise ValidationError(problems)
    recs = critical.window_experiment(specs, p, float(omega1), float(omega2), n,
                                      opts["seed"], opts["workers"])
    out = []
    for rec in recs:
        results = {
            "chi": rec.chi_hat,
            "cmax_mean": rec.cmax_mean,
            "cmax_quantiles": rec.cmax_quantiles,
            "cmax_scaled_quantiles": rec.cmax_scaled_quantiles,
            "lower_barrier": rec.lower_barrier,
            "upper_barrier": rec.upper_barrier,
            "empirical_window_prob": rec.empirical_window_prob,
            "empirical_window_stderr": rec.empirical_window_stderr,
            "reference_constant": rec.reference_constant,
            "reference_lower_term": rec.reference_lower_term,
            "log_base": rec.log_base,
        }
        out.append((rec.spec, {"p": p, "n": n, "omega1": omega1, "omega2": omega2},
                    results, None))
    return out


def _run_gamma(opts, problems):
    spec = _spec_from(opts, problems)
    n = _need(opts, "n", problems, int, lambda v: v >= 2, "must be >= 2")
    cap = _need(opts, "cap", problems, int, lambda v: v >= 1, "must be >= 1")
    pc_ref = _need(opts, "pc_ref", problems, float, lambda v: 0.0 < v <= 1.0,
                   "must be in (0,1]")
    eps_raw = _need(opts, "eps", problems)
    if problems:
        raise ValidationError(problems)
    eps = _parse_float_list(eps_raw) if isinstance(eps_raw, str) else list(eps_raw)
    res = critical.gamma_fit(spec, pc_ref, eps, n, cap, opts["seed"], opts["workers"])
    results = {
        "exponent": res.exponent,
        "points": [{"eps": e, "chi": est} for e, est in res.points],
        "implied_constants": res.implied_lower_constants,
        "implied_upper_constant": res.implied_upper_constant,
    }
    return spec, {"pc_ref": pc_ref, "eps": eps, "n": n, "cap": cap}, results, None


def _run_coupling_check(opts, problems):
    spec = _spec_from(opts, problems)
    p = _probability(opts, problems)
    n = _need(opts, "n", problems, int, lambda v: v >= 2, "must be >= 2")
    cap = _need(opts, "cap", problems, int, lambda v: v >= 1, "must be >= 1")
    if problems:
        raise ValidationError(problems)
    trace_path = opts.get("trace")
    if trace_path:
        with open(trace_path, "w") as sink:
            def trace_fn(evt):
                sink.write(json.dumps(evt, sort_keys=True) + "\n")

            summary = coupling.marginal_check(spec, p, n, cap, opts["seed"],
                                              trace=trace_fn)
    else:
        summary = coupling.marginal_check(spec, p, n, cap, opts["seed"],
                                          workers=opts["workers"])
    summary = dict(summary)
    summary.pop("torus_size_histogram", None)
    return spec, {"p": p, "n": n, "cap": cap}, summary, \
        ({"coupled": summary["censored_fraction"]}
         if summary["censored_fraction"] else None)


def _run_ineq(opts, problems):
    spec = _spec_from(opts, problems)
    p = _probability(opts, problems)
    which_raw = opts.get("which") or "fkg,bk,tree"
    which = [w.strip() for w in str(which_raw).split(",") if w.strip()]
    bad = [w for w in which if w not in ("fkg", "bk", "tree", "lemma51")]
    for w in bad:
        problems.append(f"which: unknown check {w!r}")
    if "lemma51" in which:
        _need(opts, "n", problems, int, lambda v: v >= 2, "must be >= 2")
        _need(opts, "cap", problems, int, lambda v: v >= 1, "must be >= 1")
    if problems:
        raise ValidationError(problems)
    results = {}
    battery = default_event_battery(spec)
    if "fkg" in which:
        results["fkg"] = [
            {"a": [list(a[0]), list(a[1])], "b": [list(b[0]), list(b[1])],
             "margin": exact.check_fkg(spec, p, a, b)}
            for a, b in battery["pairs"]
        ]
    if "bk" in which:
        results["bk"] = [
            {"a": [list(a[0]), list(a[1])], "b": [list(b[0]), list(b[1])],
             "margin": exact.check_bk(spec, p, a, b)}
            for a, b in battery["pairs"]
        ]
    if "tree" in which:
        results["tree"] = [
            {"x": list(x), "y": list(y), "margin": exact.check_tree_graph(spec, p, x, y)}
            for x, y in battery["triples"]
        ]
    if "lemma51" in which:
        rec = exact.lemma51_check(spec, p, opts["n"], opts["cap"],
                                  opts.get("radius_max"), opts["seed"], opts["workers"])
        results["lemma51"] = rec
    return spec, {"p": p, "which": which}, results, None


def default_event_battery(spec: TorusSpec):
    """Connection-event pairs and triples used by the inequality suite."""
    e1 = canonical_class((1,) + (0,) * (spec.d - 1), spec)
    e2 = canonical_class((2,) + (0,) * (spec.d - 1), spec)
    if spec.d >= 2:
        f1 = canonical_class((0, 1) + (0,) * (spec.d - 2), spec)
    else:
        f1 = canonical_class((-1,) + (0,) * (spec.d - 1), spec)
    zero = (0,) * spec.d
    pairs = [
        ((zero, e1), (e1, e2)),
        ((zero, e1), (zero, f1)),
        ((zero, e1), (zero, e1)),
        ((zero, f1), (e1, e2)),
    ]
    triples = [(e1, e2), (e1, f1)]
    return {"pairs": pairs, "triples": triples}


def _run_er(opts, problems):
    n_raw = _need(opts, "n", problems)
    eps = _need(opts, "eps", problems, float, lambda v: v > -1.0, "must exceed -1")
    samples = _need(opts, "samples", problems, int, lambda v: v >= 2, "must be >= 2")
    if problems:
        raise ValidationError(problems)
    n_list = _parse_int_list(n_raw) if isinstance(n_raw, str) else (
        [int(n_raw)] if isinstance(n_raw, int) else [int(v) for v in n_raw])
    points = baseline.er_scaling_experiment(n_list, eps, samples, opts["seed"],
                                            opts["workers"])
    out = []
    for pt in points:
        results = {
            "cmax_mean": pt.cmax_mean,
            "quantiles": pt.quantiles,
            "scaled_quantiles": pt.scaled_quantiles,
            "n_vertices": pt.n,
            "p": pt.p,
        }
        out.append((None, {"n_vertices": pt.n, "eps": eps, "samples": samples},
                    results, None))
    return out


def _run_boundary(opts, problems):
    op = opts.get("op") or "fourpoint"
    spec = _spec_from(opts, problems)
    p = _probability(opts, problems)
    n = _need(opts, "n", problems, int, lambda v: v >= 2, "must be >= 2")
    cap = _need(opts, "cap", problems, int, lambda v: v >= 1, "must be >= 1")
    if op == "fourpoint" and opts.get("bc") is None:
        problems.append("bc: required for fourpoint")
    if problems:
        raise ValidationError(problems)
    if op == "fourpoint":
        res = boundary.four_point_experiment(
            boundary.BoundaryCondition(opts["bc"]), spec, p, n, cap, opts["seed"],
            method=opts.get("method") or "analytic-points", workers=opts["workers"],
        )
        results = {
            "conditional": res.conditional,
            "joint4": res.joint4,
            "pair2": res.pair2,
            "conditioning_count": res.conditioning_count,
            "method": res.method,
        }
        cens = {"fourpoint": res.censored_fraction} if res.censored_fraction else None
        return spec, {"p": p, "n": n, "cap": cap, "bc": str(opts["bc"])}, results, cens
    if op == "longpath":
        eps_raw = opts.get("eps") or "0.25,0.5,1.0"
        eps = _parse_float_list(eps_raw) if isinstance(eps_raw, str) else list(eps_raw)
        res = boundary.long_path_experiment(spec, p, eps, n, cap, opts["seed"],
                                            opts["workers"])
        results = {
            "epsilons": res.epsilons,
            "estimates": res.estimates,
            "conditioning_count": res.conditioning_count,
        }
        cens = {"longpath": res.censored_fraction} if res.censored_fraction else None
        return spec, {"p": p, "n": n, "cap": cap}, results, cens
    r_raw = opts.get("r_list") or opts.get("r")
    if r_raw is None:
        raise ValidationError(["r_list: required for thirdmoment"])
    r_list = _parse_int_list(r_raw) if isinstance(r_raw, str) else list(r_raw)
    res = boundary.third_moment_growth(spec.d, r_list, p, n, cap, opts["seed"],
                                       model=spec.model, L=spec.L,
                                       workers=opts["workers"])
    results = {
        "exponent": res.exponent,
        "per_r": [{"r": r, "moment": e} for r, e in res.per_r],
        "bound_exponent": res.bound_exponent,
        "within_bound": res.within_bound,
    }
    return spec, {"p": p, "n": n, "cap": cap, "r_list": r_list}, results, None


_EXECUTORS = {
    "exact": _run_exact,
    "chi": _run_chi,
    "tau": _run_tau,
    "xi": _run_xi,
    "tildechi": _run_tildechi,
    "cmax": _run_cmax,
    "pc": _run_pc,
    "window": _run_window,
    "gamma": _run_gamma,
    "coupling-check": _run_coupling_check,
    "ineq": _run_ineq,
    "er": _run_er,
    "boundary": _run_boundary,
}


def _emit(out_path, record_dicts):
    text = "".join(records.record_line(r) + "\n" for r in record_dicts)
    if out_path:
        with open(out_path, "a") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def run_command(command: str, opts: dict) -> list[dict]:
    problems: list[str] = []
    start = time.perf_counter()
    result = _EXECUTORS[command](opts, problems)
    wall = time.perf_counter() - start
    rows = result if isinstance(result, list) else [result]
    out = []
    for spec, params, results, censored in rows:
        out.append(
            records.make_record(command, spec, params, results, opts["seed"],
                                params.get("n") or params.get("samples") or
                                params.get("n_per_eval"), wall, censored)
        )
    return out


def _run_report(args) -> int:
    try:
        with open(args.records) as fh:
            recs, errors = records.read_records(fh)
    except OSError as exc:
        print(f"records: cannot read {args.records}: {exc}", file=sys.stderr)
        return 2
    for line_no, msg in errors:
        print(f"{args.records}:{line_no}: skipped ({msg})", file=sys.stderr)
    prefix = args.out_prefix
    _write_summary_csv(recs, prefix + "_summary.csv")
    _write_plot_files(recs, prefix)
    return 0


def _flatten_results(results: dict, out: dict, base: str = ""):
    for key, value in results.items():
        name = f"{base}{key}"
        if isinstance(value, dict):
            if set(value) >= {"mean", "stderr"}:
                out[f"{name}.mean"] = value["mean"]
                out[f"{name}.stderr"] = value["stderr"]
            else:
                _flatten_results(value, out, name + ".")
        elif isinstance(value, (int, float, str, bool)) or value is None:
            out[name] = value
        else:
            out[name] = json.dumps(value)


def _write_summary_csv(recs, path):
    rows = []
    for rec in recs:
        row = {
            "schema_version": rec.get("schema_version"),
            "command": rec.get("command"),
            "seed": rec.get("seed"),
            "n": rec.get("n"),
            "wall_time_s": rec.get("wall_time_s"),
        }
        spec = rec.get("spec") or {}
        for k in ("d", "r", "model", "L", "volume", "degree"):
            row[f"spec.{k}"] = spec.get(k) if isinstance(spec, dict) else None
        params = rec.get("params") or {}
        for k, v in params.items():
            row[f"param.{k}"] = v if isinstance(v, (int, float, str, bool)) else json.dumps(v)
        _flatten_results(rec.get("results") or {}, row, "")
        rows.append(row)
    columns: list[str] = []
    for row in rows:
        for k in row:
            if k not in columns:
                columns.append(k)
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=columns, restval="")
        writer.writeheader()
        for row in rows:
            writer.writerow(row)


def _write_plot_files(recs, prefix):
    cmax_pts, chi_pts, tau_pts = [], [], []
    for rec in recs:
        cmd = rec.get("command")
        spec = rec.get("spec") or {}
        results = rec.get("results") or {}
        if cmd in ("cmax", "window") and isinstance(spec, dict) and "volume" in spec:
            qs = results.get("sizes") or results.get("cmax_quantiles")
            if qs and 0.5 in qs.get("probs", []):
                median = qs["quantiles"][qs["probs"].index(0.5)]
                err = (results.get("mean") or {}).get("stderr", 0.0)
                cmax_pts.append((spec["volume"], median, err))
        elif cmd == "gamma":
            for pt in results.get("points", []):
                chi_pts.append((pt["eps"], pt["chi"]["mean"], pt["chi"]["stderr"]))
        elif cmd == "xi":
            for k, t in zip(results.get("distances", []), results.get("tau_values", [])):
                tau_pts.append((k, t["mean"], t["stderr"]))
        elif cmd == "tau":
            params = rec.get("params") or {}
            x = params.get("x")
            if x:
                dist = sum(c * c for c in x) ** 0.5
                t = results.get("tau") or {}
                tau_pts.append((dist, t.get("mean"), t.get("stderr")))
    for name, pts in (("cmax_vs_V", cmax_pts), ("chi_vs_eps", chi_pts),
                      ("tau_vs_x", tau_pts)):
        if not pts:
            continue
        with open(f"{prefix}_{name}.tsv", "w") as fh:
            fh.write("x\ty\terr\n")
            for x, y, err in sorted(pts):
                fh.write(f"{x}\t{y}\t{err}\n")


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "report":
        return _run_report(args)
    try:
        opts = _merge_config(args)
        record_dicts = run_command(args.command, opts)
    except ValidationError as exc:
        for problem in exc.problems:
            print(f"invalid configuration: {problem}", file=sys.stderr)
        return 2
    except (InvalidSpec, InfeasibleTarget) as exc:
        print(f"invalid configuration: {exc}", file=sys.stderr)
        return 2
    except NonConvergence as exc:
        print(f"did not converge: {exc}", file=sys.stderr)
        return 3
    except (TooLarge, DegenerateFit, EmptyConditioning) as exc:
        print(f"{type(exc).__name__}: {exc}", file=sys.stderr)
        return 3
    _emit(opts.get("out"), record_dicts)
    return 0


if __name__ == "__main__":
    sys.exit(main())
