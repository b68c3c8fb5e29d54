"""Command-line entry point: experiment orchestration and reporting.

Subcommands
  harmonic        solve the Dirichlet problem and run the pointwise,
                  weak, maximum-principle, L1, and Lp checks
  evi-suite       the nine flow-axiom checks over random inputs
  ipp             pair-form convergence study toward c_d grad f . grad g
  perturbation    flow-time perturbation inequality at several levels
  max-principles  L-infinity and Lp refinement checks on two grids
  report          summarize an existing report.jsonl

Every run writes report.jsonl, summary.csv, and study .dat files into
the output directory.  Identical config and seed give byte-identical
report.jsonl; MHL_THREADS only changes scheduling, never numbers.
"""
from __future__ import annotations

import argparse
import math
import os
import sys
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from .config import ConfigError, ExperimentConfig, KIND_BY_COMMAND, \
    load_config
from .dirichlet import SolverOptions, solve_harmonic
from .evi import CHECK_NAMES, run_check
from .field import GridDomain, test_function
from .reporting import emit_report, read_report, row_counts_as_failure
from .space import make_space
from .space.quantile import uniform_quantile_sample
from .space.tripod import TripodPoint
from .verify import check_ipp_convergence, check_l1_bound, \
    check_lp_gain, check_max_principle, check_perturbation_inequality, \
    check_subharmonic, check_weak_inequality


def _threads() -> int:
    raw = os.environ.get("MHL_THREADS", "1")
    try:
        return max(1, int(raw))
    except ValueError as exc:
        raise ConfigError(f"MHL_THREADS must be an integer, got {raw!r}") \
            from exc


def _thread_map(tasks, max_workers: int) -> list:
    """Run zero-argument callables, results in submission order."""
    if max_workers <= 1 or len(tasks) <= 1:
        return [t() for t in tasks]
    with ThreadPoolExecutor(max_workers=max_workers) as pool:
        futures = [pool.submit(t) for t in tasks]
        return [f.result() for f in futures]


# -- boundary recipes ------------------------------------------------------

def boundary_recipe(name: str, space, dim: int):
    """Named boundary assignments; each returns a coords -> point map."""
    sid = space.space_id
    if name == "coordinate":
        if not sid.startswith("euclid"):
            raise ConfigError(f"recipe {name!r} needs a Euclidean space")
        width = space.width

        def coordinate(c):
            p = np.zeros(width)
            p[:min(dim, width)] = c[:min(dim, width)]
            return p
        return coordinate
    if name == "smooth":
        if not sid.startswith("euclid"):
            raise ConfigError(f"recipe {name!r} needs a Euclidean space")
        width = space.width

        def smooth(c):
            x2 = c[1] if dim == 2 else 0.0
            return np.array([
                math.sin((k + 2.0) * c[0] + 0.7 * k)
                + (x2 * x2 - x2) * (-1.0) ** k
                for k in range(width)])
        return smooth
    if name == "quantile-plates":
        if sid != "quantile-entropy":
            raise ConfigError(f"recipe {name!r} needs quantile-entropy")
        lo = uniform_quantile_sample(space.m, 0.0, 0.5)
        hi = uniform_quantile_sample(space.m, 0.0, 1.0)
        return lambda c: (1.0 - c[0]) * lo + c[0] * hi
    if name == "tripod-branches":
        if sid != "tripod-quadratic":
            raise ConfigError(f"recipe {name!r} needs tripod-quadratic")

        def branches(c):
            branch = 1 + min(2, int(3.0 * c[0]))
            radius = 0.25 + (c[1] if dim == 2 else c[0])
            return TripodPoint(branch, radius)
        return branches
    raise ConfigError(f"unknown boundary recipe {name!r}")


IPP_PAIRS = {
    # name -> (f, g, analytic target factory given dim)
    "linear-x1": (lambda c: c[:, 0], lambda c: c[:, 0], lambda cd: cd),
    "antisymmetric": (lambda c: c[:, 0], lambda c: c[:, 1], lambda cd: 0.0),
    "kink": (lambda c: np.abs(c[:, 0] - 0.5), lambda c: c[:, 0],
             lambda cd: 0.0),
}


def _make_space(cfg: ExperimentConfig):
    try:
        return make_space(cfg.space_id, **cfg.space_params)
    except (ValueError, TypeError) as exc:
        raise ConfigError(str(exc)) from exc


def _solver_options(cfg: ExperimentConfig) -> SolverOptions:
    kw = {}
    if cfg.option("solver.max_sweeps") is not None:
        kw["max_sweeps"] = int(cfg.option("solver.max_sweeps"))
    if cfg.option("solver.fixed_point_tol") is not None:
        kw["fixed_point_tol"] = float(cfg.option("solver.fixed_point_tol"))
    return SolverOptions(**kw)


def _solved_field(cfg: ExperimentConfig, space, n: int | None = None):
    domain = GridDomain(cfg.dim, n or cfg.n)
    recipe = boundary_recipe(cfg.option("boundary.recipe"), space, cfg.dim)
    return solve_harmonic(domain, space, recipe, _solver_options(cfg))


def run_harmonic(cfg: ExperimentConfig, threads: int):
    space = _make_space(cfg)
    phi = test_function(cfg.option("test_function.id", "poly-bump"),
                        cfg.dim)
    f = _solved_field(cfg, space)
    qs = cfg.option("lp.q", []) if cfg.dim == 2 else []
    refined = _solved_field(cfg, space, 2 * cfg.n - 1) if qs else None

    tasks = [
        lambda: check_subharmonic(
            f, tol=float(cfg.option("tolerances.subharmonic", 1e-12))),
        lambda: check_weak_inequality(f, space, phi),
        lambda: check_max_principle(
            f, tol=float(cfg.option("tolerances.max_principle", 1e-10))),
        lambda: check_l1_bound(f),
    ]
    tasks += [lambda q=q: check_lp_gain(f, space, q, refined=refined)
              for q in qs]
    return _thread_map(tasks, threads), []


def run_evi(cfg: ExperimentConfig, threads: int):
    space = _make_space(cfg)
    samples = int(cfg.option("evi.samples", 1000))
    t_max = float(cfg.option("evi.t_max", 2.0))
    tasks = [lambda name=name: run_check(space, cfg.seed, name,
                                         n_samples=samples, t_max=t_max)
             for name in CHECK_NAMES]
    return _thread_map(tasks, threads), []


def run_ipp(cfg: ExperimentConfig, threads: int):
    pair = cfg.option("ipp.pair", "linear-x1")
    if pair not in IPP_PAIRS:
        raise ConfigError(f"unknown ipp.pair {pair!r}; "
                          f"known: {sorted(IPP_PAIRS)}")
    if pair == "antisymmetric" and cfg.dim != 2:
        raise ConfigError("the antisymmetric pair needs domain.dim = 2")
    from .dirichlet import c_d
    fn_f, fn_g, target = IPP_PAIRS[pair]
    domain = GridDomain(cfg.dim, cfg.n)
    eps = cfg.option("ipp.eps", [0.2, 0.1, 0.05])
    rep = check_ipp_convergence(fn_f, fn_g, domain, eps,
                                analytic_target=target(c_d(cfg.dim)))
    study = (f"ipp_{pair}",
             list(zip(rep.metadata["eps"], rep.metadata["errors"])))
    return [rep], [study]


def run_perturbation(cfg: ExperimentConfig, threads: int):
    space = _make_space(cfg)
    phi = test_function(cfg.option("test_function.id", "poly-bump"),
                        cfg.dim)
    zero = test_function("zero", cfg.dim)
    lam = float(cfg.option("perturbation.lambda", 1.0))
    deltas = cfg.option("perturbation.delta", [0.01, 0.1])
    eps = cfg.option("perturbation.eps")
    eps = float(eps) if eps is not None else None
    f = _solved_field(cfg, space)

    def at(delta, fn, scale):
        return check_perturbation_inequality(f, space, fn, delta,
                                             lam=scale, eps=eps)
    pairs = _thread_map(
        [lambda d=d: at(d, phi, lam) for d in deltas]
        + [lambda d=d: at(d, zero, 1.0) for d in deltas], threads)
    reports = [r for pair in pairs for r in pair]
    graph_rows = [(d, pairs[i][0].slack) for i, d in enumerate(deltas)]
    eps_rows = [(d, pairs[i][1].slack) for i, d in enumerate(deltas)]
    return reports, [("perturbation_graph", graph_rows),
                     ("perturbation_eps", eps_rows)]


def run_max_principles(cfg: ExperimentConfig, threads: int):
    space = _make_space(cfg)
    f = _solved_field(cfg, space)
    refined = _solved_field(cfg, space, 2 * cfg.n - 1)
    tol = float(cfg.option("tolerances.max_principle", 1e-10))
    tasks = [
        lambda: check_max_principle(f, tol=tol),
        lambda: check_max_principle(refined, tol=tol),
    ]
    if cfg.dim == 2:
        tasks += [lambda q=q: check_lp_gain(f, space, q, refined=refined)
                  for q in cfg.option("lp.q", [])]
    return _thread_map(tasks, threads), []


_RUNNERS = {
    "harmonic": run_harmonic,
    "evi-suite": run_evi,
    "ipp": run_ipp,
    "perturbation": run_perturbation,
    "maximum-principles": run_max_principles,
}


def run_experiment(cfg: ExperimentConfig, threads: int = 1) -> int:
    """Run the configured pipeline, write reports, return the exit
    status (0 ok, 1 check failures, 2 unusable config)."""
    try:
        reports, studies = _RUNNERS[cfg.kind](cfg, threads)
    except ConfigError:
        raise
    rows = emit_report(reports, cfg.out, studies)
    failed = False
    for row in rows:
        bad = row_counts_as_failure(row)
        failed = failed or bad
        _print_row(row)
    print(f"wrote {os.path.join(cfg.out, 'report.jsonl')}")
    return 1 if failed else 0


def _print_row(row: dict) -> None:
    md = row.get("metadata", {})
    if not md.get("applicable", True):
        state = "SKIP"
    elif row["passed"]:
        state = "PASS"
    else:
        state = "soft-FAIL" if md.get("indicative") else "FAIL"
    print(f"{row['check']:<22} {state:9} slack={row['slack']:+.3e} "
          f"tol={row['tolerance']:.3e}")


def cmd_report(args) -> int:
    path = args.path
    if os.path.isdir(path):
        path = os.path.join(path, "report.jsonl")
    rows = read_report(path)
    failed = False
    for row in rows:
        _print_row(row)
        failed = failed or row_counts_as_failure(row)
    print(f"{len(rows)} checks, "
          f"{sum(1 for r in rows if r['passed'])} passed")
    return 1 if failed else 0


def _build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="mhl",
        description="harmonic-map and gradient-flow inequality checks")
    sub = ap.add_subparsers(dest="command", required=True)
    for cmd in KIND_BY_COMMAND:
        p = sub.add_parser(cmd)
        p.add_argument("--config", default=None)
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--out", default=None)
        p.add_argument("--n", type=int, default=None)
        p.add_argument("--space", default=None)
    p = sub.add_parser("report")
    p.add_argument("path", help="report.jsonl file or run directory")
    return ap


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    if args.command == "report":
        return cmd_report(args)
    overrides = {"seed": args.seed, "out": args.out, "domain.n": args.n,
                 "space.id": args.space}
    try:
        cfg = load_config(args.config, KIND_BY_COMMAND[args.command],
                          overrides)
        return run_experiment(cfg, threads=_threads())
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
